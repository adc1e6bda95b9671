import { afterEach, beforeEach, describe, expect, it, vi } from 'vitest'
import { QueueResponse, SimlabApi } from '../src/api'
import { QueuePoller, QueueView } from '../src/queue'
import { installMockService } from './mockService'

describe('queue poller', () => {
  afterEach(() => {
    vi.unstubAllGlobals()
    vi.useRealTimers()
  })

  it('coalesces overlapping polls to at most one in flight', async () => {
    let inFlight = 0
    let maxInFlight = 0
    let release: () => void = () => {}
    vi.stubGlobal(
      'fetch',
      vi.fn(async () => {
        inFlight += 1
        maxInFlight = Math.max(maxInFlight, inFlight)
        await new Promise<void>((resolve) => {
          release = resolve
        })
        inFlight -= 1
        return new Response(
          JSON.stringify({
            queued: [],
            running: [],
            stats: { queue_length: 0, running: 0, completed: 0, failed: 0 },
          }),
          { status: 200 },
        )
      }),
    )
    const poller = new QueuePoller(new SimlabApi(), () => {}, () => {}, 10)
    const first = poller.poll()
    // three more ticks while the first request hangs: all must be skipped
    await poller.poll()
    await poller.poll()
    await poller.poll()
    expect(maxInFlight).toBe(1)
    expect(vi.mocked(fetch).mock.calls).toHaveLength(1)
    release()
    await first
    const second = poller.poll() // after completion the next poll goes through
    release()
    await second
    expect(vi.mocked(fetch).mock.calls).toHaveLength(2)
    expect(maxInFlight).toBe(1)
  })

  it('polls on the configured interval', async () => {
    vi.useFakeTimers()
    installMockService()
    const updates: QueueResponse[] = []
    const poller = new QueuePoller(new SimlabApi(), (queue) => updates.push(queue), () => {}, 2000)
    poller.start()
    await vi.advanceTimersByTimeAsync(6100)
    poller.stop()
    expect(updates.length).toBeGreaterThanOrEqual(3)
    await vi.advanceTimersByTimeAsync(4000)
    const settled = updates.length
    await vi.advanceTimersByTimeAsync(4000)
    expect(updates.length).toBe(settled) // stopped means stopped
  })
})

describe('queue view', () => {
  let root: HTMLElement

  beforeEach(() => {
    root = document.createElement('div')
    document.body.appendChild(root)
  })

  afterEach(() => {
    root.remove()
    vi.unstubAllGlobals()
  })

  it('updates a tracked experiment to DONE in place, no reload', async () => {
    installMockService({
      experimentStatuses: {
        'webui-0001-abcdef': ['QUEUED', 'RUNNING', 'DONE'],
      },
      queueResponses: [
        { queued: ['webui-0001-abcdef'], running: [] },
        { queued: [], running: ['webui-0001-abcdef'] },
        { queued: [], running: [] },
      ],
    })
    const view = new QueueView(root, new SimlabApi())
    view.track('webui-0001-abcdef')

    await view.poller.poll()
    let badge = root.querySelector('[data-experiment] .badge')!
    expect(badge.textContent).toBe('QUEUED')

    await view.poller.poll()
    badge = root.querySelector('[data-experiment] .badge')!
    expect(badge.textContent).toBe('RUNNING')

    await view.poller.poll()
    badge = root.querySelector('[data-experiment] .badge')!
    expect(badge.textContent).toBe('DONE')

    // terminal experiments are not re-fetched on later polls
    const callsAfterDone = vi
      .mocked(fetch)
      .mock.calls.filter(([url]) => String(url).includes('/api/experiments/webui')).length
    await view.poller.poll()
    const callsNext = vi
      .mocked(fetch)
      .mock.calls.filter(([url]) => String(url).includes('/api/experiments/webui')).length
    expect(callsNext).toBe(callsAfterDone)
  })

  it('renders queue stats', async () => {
    installMockService({
      queueResponses: [{ queued: ['a', 'b'], running: ['c'] }],
    })
    const view = new QueueView(root, new SimlabApi())
    await view.poller.poll()
    expect(root.querySelector('.queue-stats')!.textContent).toContain('queued 2')
    expect(root.querySelector('.queue-stats')!.textContent).toContain('running 1')
  })

  it('shows an error banner when the service is unreachable', async () => {
    vi.stubGlobal('fetch', vi.fn().mockRejectedValue(new TypeError('fetch failed')))
    const view = new QueueView(root, new SimlabApi())
    await view.poller.poll()
    expect(root.querySelector('.error-banner')).not.toBeNull()
  })
})
