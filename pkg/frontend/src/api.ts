// Typed client for the simlab service API. The UI never computes over
// metric values; everything rendered comes straight from these responses.

export interface SystemRef {
  name: string
  version: string
}

export interface MetricAggregate {
  mean: number
  count: number
}

export interface LeaderboardRow {
  agent: SystemRef
  simulator: SystemRef
  metrics: Record<string, MetricAggregate>
  experiment_ids: string[]
}

export interface LeaderboardResponse {
  task: string
  rows: LeaderboardRow[]
}

export interface QueueStats {
  queue_length: number
  running: number
  completed: number
  failed: number
}

export interface QueueResponse {
  queued: string[]
  running: string[]
  stats: QueueStats
}

export interface ExperimentDoc {
  experiment_id: string
  status: string
  progress: number
  failure_reason: string | null
  timestamps: Record<string, string>
  config?: Record<string, unknown>
}

export interface ExperimentSubmission {
  task: string
  agent: SystemRef
  simulator: SystemRef
  num_needs: number
  seed: number
  limits?: { max_turns: number; call_timeout: number }
  submitter?: string
}

export type SortOrder = 'asc' | 'desc'

export const TERMINAL_STATUSES = ['DONE', 'FAILED']

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: string,
  ) {
    // surface the server's body verbatim; views display it as-is
    super(body)
  }
}

async function checkOk(response: Response): Promise<Response> {
  if (!response.ok) {
    throw new ApiError(response.status, await response.text())
  }
  return response
}

export class SimlabApi {
  constructor(private baseUrl: string = '') {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`
  }

  async getLeaderboard(
    task: string,
    sort?: string,
    order?: SortOrder,
  ): Promise<LeaderboardResponse> {
    const params = new URLSearchParams()
    if (sort) {
      params.set('sort', sort)
      params.set('order', order ?? 'desc')
    }
    const query = params.toString()
    const path = `/api/leaderboard/${encodeURIComponent(task)}${query ? `?${query}` : ''}`
    const response = await checkOk(await fetch(this.url(path)))
    return response.json()
  }

  async getQueue(): Promise<QueueResponse> {
    const response = await checkOk(await fetch(this.url('/api/queue')))
    return response.json()
  }

  async getExperiment(id: string): Promise<ExperimentDoc> {
    const response = await checkOk(
      await fetch(this.url(`/api/experiments/${encodeURIComponent(id)}`)),
    )
    return response.json()
  }

  async submitExperiment(
    body: ExperimentSubmission,
    token: string,
  ): Promise<{ experiment_id: string }> {
    const response = await checkOk(
      await fetch(this.url('/api/experiments'), {
        method: 'POST',
        headers: {
          'Content-Type': 'application/json',
          Authorization: `Bearer ${token}`,
        },
        body: JSON.stringify(body),
      }),
    )
    return response.json()
  }

  /** Raw bytes of the stored results document, byte-identical to the API response. */
  async downloadResults(id: string): Promise<Uint8Array> {
    const response = await checkOk(
      await fetch(this.url(`/api/experiments/${encodeURIComponent(id)}/results`)),
    )
    return new Uint8Array(await response.arrayBuffer())
  }
}
