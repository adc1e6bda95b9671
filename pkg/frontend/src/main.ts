import { SimlabApi } from './api'
import { LeaderboardView } from './leaderboard'
import { QueueView } from './queue'
import { SubmitView } from './submit'
import './styles.css'

const api = new SimlabApi()

const app = document.getElementById('app')!
app.innerHTML = `
  <header>
    <h1>simlab</h1>
    <nav>
      <button data-tab="leaderboard" class="active">Leaderboard</button>
      <button data-tab="submit">Submit</button>
      <button data-tab="queue">Queue</button>
    </nav>
    <div class="task-picker">
      task: <input id="task-input" value="movies">
    </div>
  </header>
  <main>
    <section id="leaderboard-view"></section>
    <section id="submit-view" hidden></section>
    <section id="queue-view" hidden></section>
  </main>
`

const leaderboard = new LeaderboardView(document.getElementById('leaderboard-view')!, api)
const queue = new QueueView(document.getElementById('queue-view')!, api)
const submit = new SubmitView(document.getElementById('submit-view')!, api, (id) => {
  queue.track(id)
  activate('queue')
})

const taskInput = document.getElementById('task-input') as HTMLInputElement
taskInput.onchange = () => void leaderboard.show(taskInput.value)

function activate(tab: string): void {
  for (const button of document.querySelectorAll<HTMLButtonElement>('nav button')) {
    button.classList.toggle('active', button.dataset.tab === tab)
  }
  for (const section of document.querySelectorAll<HTMLElement>('main section')) {
    section.hidden = section.id !== `${tab}-view`
  }
  queue.hide()
  if (tab === 'leaderboard') void leaderboard.show(taskInput.value)
  if (tab === 'submit') submit.show()
  if (tab === 'queue') queue.show()
}

for (const button of document.querySelectorAll<HTMLButtonElement>('nav button')) {
  button.onclick = () => activate(button.dataset.tab!)
}

activate('leaderboard')
