import { afterEach, beforeEach, describe, expect, it, vi } from 'vitest'
import { SimlabApi } from '../src/api'
import { LeaderboardView } from '../src/leaderboard'
import { installMockService } from './mockService'

function rowLabels(root: HTMLElement): string[] {
  return [...root.querySelectorAll('tbody tr')].map(
    (tr) => tr.querySelector('td')!.textContent!,
  )
}

describe('leaderboard view', () => {
  let root: HTMLElement

  beforeEach(() => {
    root = document.createElement('div')
    document.body.appendChild(root)
  })

  afterEach(() => {
    root.remove()
    vi.unstubAllGlobals()
  })

  it('renders one table row per (agent, simulator) pair', async () => {
    installMockService()
    const view = new LeaderboardView(root, new SimlabApi(), () => {})
    await view.show('movies')
    expect(root.querySelectorAll('tbody tr')).toHaveLength(2)
    const headers = [...root.querySelectorAll('th')].map((th) => th.textContent)
    expect(headers.join(' ')).toContain('success_rate')
    expect(headers.join(' ')).toContain('fed_understanding')
  })

  it('shows metric values exactly as the API sent them', async () => {
    installMockService()
    const view = new LeaderboardView(root, new SimlabApi(), () => {})
    await view.show('movies')
    const cells = [...root.querySelectorAll('tbody td')].map((td) => td.textContent)
    expect(cells).toContain('0.6')
    expect(cells).toContain('0.85')
  })

  it('header clicks re-fetch with sort params and follow the API order', async () => {
    const state = installMockService()
    const view = new LeaderboardView(root, new SimlabApi(), () => {})
    await view.show('movies')
    expect(rowLabels(root)).toEqual(['alpha-agent@1.0', 'beta-agent@2.0'])

    await view.toggleSort('success_rate')
    expect(state.calls.at(-1)).toContain('sort=success_rate')
    expect(state.calls.at(-1)).toContain('order=desc')
    expect(rowLabels(root)).toEqual(['beta-agent@2.0', 'alpha-agent@1.0'])

    await view.toggleSort('success_rate') // second click reverses
    expect(state.calls.at(-1)).toContain('order=asc')
    expect(rowLabels(root)).toEqual(['alpha-agent@1.0', 'beta-agent@2.0'])
  })

  it('clicking the rendered header cell triggers the sort round-trip', async () => {
    const state = installMockService()
    const view = new LeaderboardView(root, new SimlabApi(), () => {})
    await view.show('movies')
    const header = root.querySelector<HTMLElement>('th[data-metric="success_rate"]')!
    header.click()
    await vi.waitFor(() => {
      expect(state.calls.at(-1)).toContain('sort=success_rate')
    })
  })

  it('download control yields bytes identical to the results endpoint', async () => {
    const state = installMockService()
    const saved: Array<{ name: string; bytes: Uint8Array }> = []
    const view = new LeaderboardView(root, new SimlabApi(), (name, bytes) =>
      saved.push({ name, bytes }),
    )
    await view.show('movies')
    const row = (await new SimlabApi().getLeaderboard('movies')).rows[0]
    const downloaded = await view.downloadRow(row)

    const direct = await fetch('/api/experiments/exp-alpha/results')
    const expected = new Uint8Array(await direct.arrayBuffer())
    expect(downloaded).toHaveLength(1)
    expect([...downloaded[0]]).toEqual([...expected])
    expect(saved[0].name).toBe('exp-alpha-results.json')
    expect(new TextDecoder().decode(saved[0].bytes)).toBe(
      state.resultsDocs['exp-alpha'],
    )
  })

  it('renders a placeholder when the task has no results', async () => {
    installMockService({ rows: [] })
    const view = new LeaderboardView(root, new SimlabApi(), () => {})
    await view.show('movies')
    expect(root.querySelector('.placeholder')!.textContent).toBe('no results yet')
    expect(root.querySelector('table')).toBeNull()
  })

  it('shows an inline error banner when the service is unreachable', async () => {
    vi.stubGlobal('fetch', vi.fn().mockRejectedValue(new TypeError('fetch failed')))
    const view = new LeaderboardView(root, new SimlabApi(), () => {})
    await view.show('movies')
    expect(root.querySelector('.error-banner')).not.toBeNull()
    expect(root.querySelector('table')).toBeNull()
  })
})
