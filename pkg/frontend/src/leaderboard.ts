import { ApiError, LeaderboardResponse, LeaderboardRow, SimlabApi, SortOrder } from './api'

// Sortable leaderboard: one row per (agent, simulator) pair, one column per
// metric. Header clicks re-fetch with sort=<metric>&order=..., so the
// displayed order is always the API's order, never a local re-sort.
export class LeaderboardView {
  private sort: string | null = null
  private order: SortOrder = 'desc'
  private task = ''

  constructor(
    private root: HTMLElement,
    private api: SimlabApi,
    private saveAs: (name: string, bytes: Uint8Array) => void = triggerBrowserDownload,
  ) {}

  async show(task: string): Promise<void> {
    this.task = task
    await this.refresh()
  }

  async toggleSort(metric: string): Promise<void> {
    if (this.sort === metric) {
      this.order = this.order === 'desc' ? 'asc' : 'desc'
    } else {
      this.sort = metric
      this.order = 'desc'
    }
    await this.refresh()
  }

  async downloadRow(row: LeaderboardRow): Promise<Uint8Array[]> {
    const all: Uint8Array[] = []
    for (const id of row.experiment_ids) {
      const bytes = await this.api.downloadResults(id)
      this.saveAs(`${id}-results.json`, bytes)
      all.push(bytes)
    }
    return all
  }

  private async refresh(): Promise<void> {
    let data: LeaderboardResponse
    try {
      data = await this.api.getLeaderboard(this.task, this.sort ?? undefined, this.order)
    } catch (error) {
      this.renderError(error)
      return
    }
    this.render(data)
  }

  private renderError(error: unknown): void {
    const message =
      error instanceof ApiError ? error.body : 'service unreachable, retry shortly'
    this.root.innerHTML = ''
    const banner = document.createElement('div')
    banner.className = 'error-banner'
    banner.textContent = message
    this.root.appendChild(banner)
  }

  private render(data: LeaderboardResponse): void {
    this.root.innerHTML = ''
    const heading = document.createElement('h2')
    heading.textContent = `Leaderboard: ${data.task}`
    this.root.appendChild(heading)

    if (data.rows.length === 0) {
      const empty = document.createElement('p')
      empty.className = 'placeholder'
      empty.textContent = 'no results yet'
      this.root.appendChild(empty)
      return
    }

    const metrics = collectMetricNames(data.rows)
    const table = document.createElement('table')
    table.className = 'leaderboard'
    const head = table.createTHead().insertRow()
    for (const label of ['agent', 'simulator']) {
      const th = document.createElement('th')
      th.textContent = label
      head.appendChild(th)
    }
    for (const metric of metrics) {
      const th = document.createElement('th')
      th.className = 'sortable'
      th.dataset.metric = metric
      const marker =
        this.sort === metric ? (this.order === 'desc' ? ' ▼' : ' ▲') : ''
      th.textContent = metric + marker
      th.onclick = () => void this.toggleSort(metric)
      head.appendChild(th)
    }
    const downloadTh = document.createElement('th')
    downloadTh.textContent = 'results'
    head.appendChild(downloadTh)

    const body = table.createTBody()
    for (const row of data.rows) {
      const tr = body.insertRow()
      tr.insertCell().textContent = `${row.agent.name}@${row.agent.version}`
      tr.insertCell().textContent = `${row.simulator.name}@${row.simulator.version}`
      for (const metric of metrics) {
        const entry = row.metrics[metric]
        // numbers rendered exactly as the API sent them
        tr.insertCell().textContent = entry ? String(entry.mean) : '-'
      }
      const cell = tr.insertCell()
      const button = document.createElement('button')
      button.className = 'download'
      button.textContent = 'Download results'
      button.onclick = () => void this.downloadRow(row)
      cell.appendChild(button)
    }
    this.root.appendChild(table)
  }
}

function collectMetricNames(rows: LeaderboardRow[]): string[] {
  const names = new Set<string>()
  for (const row of rows) {
    for (const metric of Object.keys(row.metrics)) {
      names.add(metric)
    }
  }
  return [...names].sort()
}

function triggerBrowserDownload(name: string, bytes: Uint8Array): void {
  const blob = new Blob([bytes.buffer as ArrayBuffer], { type: 'application/json' })
  const url = URL.createObjectURL(blob)
  const anchor = document.createElement('a')
  anchor.href = url
  anchor.download = name
  anchor.click()
  URL.revokeObjectURL(url)
}
