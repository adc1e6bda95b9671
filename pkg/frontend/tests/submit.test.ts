import { afterEach, beforeEach, describe, expect, it, vi } from 'vitest'
import { SimlabApi } from '../src/api'
import { SubmitView } from '../src/submit'
import { installMockService } from './mockService'

function fill(root: HTMLElement, name: string, value: string): void {
  const input = root.querySelector<HTMLInputElement>(`[name="${name}"]`)!
  input.value = value
}

describe('submit view', () => {
  let root: HTMLElement

  beforeEach(() => {
    root = document.createElement('div')
    document.body.appendChild(root)
  })

  afterEach(() => {
    root.remove()
    vi.unstubAllGlobals()
  })

  it('shows the new experiment id and notifies the queue view', async () => {
    installMockService()
    const tracked: string[] = []
    const view = new SubmitView(root, new SimlabApi(), (id) => tracked.push(id))
    view.show()
    fill(root, 'token', 'sesame')
    await view.submit(root.querySelector('form')!)
    expect(root.querySelector('.submit-ok')!.textContent).toContain('webui-0001-abcdef')
    expect(tracked).toEqual(['webui-0001-abcdef'])
  })

  it('surfaces a 401 body verbatim', async () => {
    installMockService()
    const view = new SubmitView(root, new SimlabApi(), () => {})
    view.show()
    fill(root, 'token', 'wrong-token')
    await view.submit(root.querySelector('form')!)
    const banner = root.querySelector('.error-banner')!
    expect(banner.textContent).toBe(
      JSON.stringify({ error: 'missing or invalid bearer token' }),
    )
  })

  it('surfaces a 400 body verbatim', async () => {
    installMockService()
    const view = new SubmitView(root, new SimlabApi(), () => {})
    view.show()
    fill(root, 'token', 'sesame')
    fill(root, 'num_needs', '0')
    await view.submit(root.querySelector('form')!)
    const banner = root.querySelector('.error-banner')!
    expect(banner.textContent).toContain('num_needs must be >= 1')
  })

  it('reports unreachable service without crashing', async () => {
    vi.stubGlobal('fetch', vi.fn().mockRejectedValue(new TypeError('fetch failed')))
    const view = new SubmitView(root, new SimlabApi(), () => {})
    view.show()
    fill(root, 'token', 'sesame')
    await view.submit(root.querySelector('form')!)
    expect(root.querySelector('.error-banner')!.textContent).toContain('unreachable')
  })
})
