import { ExperimentDoc, QueueResponse, SimlabApi, TERMINAL_STATUSES } from './api'

// Polls the queue (default every 2 s) plus the status of experiments the
// user has submitted this session, until they reach a terminal state.
// Overlapping polls are coalesced: at most one request cycle is in flight.
export class QueuePoller {
  private timer: ReturnType<typeof setInterval> | null = null
  private inFlight = false
  private tracked = new Map<string, ExperimentDoc>()

  constructor(
    private api: SimlabApi,
    private onUpdate: (queue: QueueResponse, tracked: Map<string, ExperimentDoc>) => void,
    private onError: (error: unknown) => void = () => {},
    private intervalMs = 2000,
  ) {}

  track(experimentId: string): void {
    if (!this.tracked.has(experimentId)) {
      this.tracked.set(experimentId, {
        experiment_id: experimentId,
        status: 'QUEUED',
        progress: 0,
        failure_reason: null,
        timestamps: {},
      })
    }
  }

  start(): void {
    if (this.timer !== null) return
    void this.poll()
    this.timer = setInterval(() => void this.poll(), this.intervalMs)
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer)
      this.timer = null
    }
  }

  async poll(): Promise<void> {
    if (this.inFlight) return // coalesce: never two cycles at once
    this.inFlight = true
    try {
      const queue = await this.api.getQueue()
      for (const [id, doc] of this.tracked) {
        if (TERMINAL_STATUSES.includes(doc.status)) continue
        this.tracked.set(id, await this.api.getExperiment(id))
      }
      this.onUpdate(queue, this.tracked)
    } catch (error) {
      this.onError(error)
    } finally {
      this.inFlight = false
    }
  }
}

export class QueueView {
  readonly poller: QueuePoller

  constructor(
    private root: HTMLElement,
    api: SimlabApi,
  ) {
    this.poller = new QueuePoller(
      api,
      (queue, tracked) => this.render(queue, tracked),
      (error) => this.renderError(error),
    )
  }

  track(experimentId: string): void {
    this.poller.track(experimentId)
  }

  show(): void {
    this.poller.start()
  }

  hide(): void {
    this.poller.stop()
  }

  private renderError(error: unknown): void {
    const banner = document.createElement('div')
    banner.className = 'error-banner'
    banner.textContent = error instanceof Error ? error.message : String(error)
    this.root.innerHTML = ''
    this.root.appendChild(banner)
  }

  private render(queue: QueueResponse, tracked: Map<string, ExperimentDoc>): void {
    this.root.innerHTML = ''
    const heading = document.createElement('h2')
    heading.textContent = 'Queue'
    this.root.appendChild(heading)

    const stats = document.createElement('p')
    stats.className = 'queue-stats'
    stats.textContent =
      `queued ${queue.stats.queue_length} · running ${queue.stats.running} · ` +
      `completed ${queue.stats.completed} · failed ${queue.stats.failed}`
    this.root.appendChild(stats)

    const list = document.createElement('ul')
    list.className = 'queue-list'
    for (const id of [...queue.running, ...queue.queued]) {
      if (!tracked.has(id)) {
        const item = document.createElement('li')
        item.textContent = `${id} — ${queue.running.includes(id) ? 'active' : 'waiting'}`
        list.appendChild(item)
      }
    }
    for (const [id, doc] of tracked) {
      const item = document.createElement('li')
      item.dataset.experiment = id
      const badge = document.createElement('span')
      badge.className = `badge badge-${doc.status.toLowerCase()}`
      badge.textContent = doc.status
      item.appendChild(badge)
      const label = document.createElement('span')
      const progress = Math.round(doc.progress * 100)
      label.textContent = ` ${id} (${progress}%)`
      if (doc.failure_reason) {
        label.textContent += ` — ${doc.failure_reason}`
      }
      item.appendChild(label)
      list.appendChild(item)
    }
    this.root.appendChild(list)
  }
}
