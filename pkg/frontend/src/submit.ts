import { ApiError, ExperimentSubmission, SimlabApi } from './api'

// Experiment submission form. Error bodies from the service (400/401) are
// surfaced verbatim; a successful submission shows the new experiment id
// and hands it to the queue view for status tracking.
export class SubmitView {
  constructor(
    private root: HTMLElement,
    private api: SimlabApi,
    private onSubmitted: (experimentId: string) => void = () => {},
  ) {}

  show(): void {
    this.root.innerHTML = `
      <h2>Submit experiment</h2>
      <form class="submit-form">
        <label>API token <input name="token" type="password" required></label>
        <label>Task <input name="task" value="movies" required></label>
        <label>Agent name <input name="agent_name" value="ref-agent" required></label>
        <label>Agent version <input name="agent_version" value="1.0" required></label>
        <label>Simulator name <input name="simulator_name" value="ref-simulator" required></label>
        <label>Simulator version <input name="simulator_version" value="1.0" required></label>
        <label>Information needs <input name="num_needs" type="number" value="20" min="1" required></label>
        <label>Seed <input name="seed" type="number" value="7" required></label>
        <button type="submit">Submit</button>
      </form>
      <div class="submit-result"></div>
    `
    const form = this.root.querySelector<HTMLFormElement>('form.submit-form')!
    form.onsubmit = (event) => {
      event.preventDefault()
      void this.submit(form)
    }
  }

  async submit(form: HTMLFormElement): Promise<void> {
    const data = new FormData(form)
    const field = (name: string) => String(data.get(name) ?? '')
    const body: ExperimentSubmission = {
      task: field('task'),
      agent: { name: field('agent_name'), version: field('agent_version') },
      simulator: { name: field('simulator_name'), version: field('simulator_version') },
      num_needs: Number(field('num_needs')),
      seed: Number(field('seed')),
      submitter: 'webui',
    }
    const result = this.root.querySelector<HTMLDivElement>('.submit-result')!
    result.innerHTML = ''
    try {
      const { experiment_id } = await this.api.submitExperiment(body, field('token'))
      const ok = document.createElement('p')
      ok.className = 'submit-ok'
      ok.textContent = `submitted: ${experiment_id}`
      result.appendChild(ok)
      this.onSubmitted(experiment_id)
    } catch (error) {
      const banner = document.createElement('div')
      banner.className = 'error-banner'
      banner.textContent =
        error instanceof ApiError ? error.body : 'service unreachable, retry shortly'
      result.appendChild(banner)
    }
  }
}
