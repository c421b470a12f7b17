// Browser entry point: wires keyboard, canvas, control buttons, and the
// WebSocket to one teleop session. Server address and tick rate are the only
// configuration.

import { CONTROL_KEYS } from './keys.js'
import { ClientMsg, ServerMsg } from './protocol.js'
import { SceneRenderer } from './render.js'
import { TeleopSession, Transport } from './session.js'

const TICK_MS = 100 // 10 actions per second

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id)
  if (!node) throw new Error(`missing element #${id}`)
  return node as T
}

function connect(session: TeleopSession, url: string): void {
  const socket = new WebSocket(url)
  const transport: Transport = {
    send: (msg: ClientMsg) => socket.send(JSON.stringify(msg)),
    close: () => socket.close(),
  }
  socket.onopen = () => {
    session.attach(transport)
    session.reset()
  }
  socket.onmessage = (ev) => session.handleServer(JSON.parse(ev.data) as ServerMsg)
  socket.onclose = () => session.detach()
  socket.onerror = () => session.detach()
}

export function start(): void {
  const canvas = el<HTMLCanvasElement>('world')
  const banner = el<HTMLDivElement>('banner')
  const statusEl = el<HTMLSpanElement>('status')
  const scoreEl = el<HTMLSpanElement>('score')
  const recordBtn = el<HTMLButtonElement>('record')
  const discardBtn = el<HTMLButtonElement>('discard')
  const resetBtn = el<HTMLButtonElement>('reset')
  const addrInput = el<HTMLInputElement>('address')

  const renderer = new SceneRenderer(canvas)
  const session = new TeleopSession({
    onScene: (scene, done) => {
      renderer.draw(scene, session.recording)
      scoreEl.textContent =
        `reward ${scene.episode_reward.toFixed(2)}  cost ${scene.episode_cost.toFixed(1)}`
      if (done) {
        banner.textContent = 'episode over; press Reset'
        banner.className = 'info'
      }
    },
    onNotice: (retained, cost, msg) => {
      banner.textContent = msg
      banner.className = retained ? 'ok' : 'warn'
    },
    onError: (msg) => {
      banner.textContent = `server: ${msg}`
      banner.className = 'warn'
    },
    onStatus: (status) => {
      statusEl.textContent = status
      if (status === 'closed') {
        banner.textContent = 'connection lost; reload or reconnect'
        banner.className = 'warn'
      }
    },
  })

  window.addEventListener('keydown', (ev) => {
    if (CONTROL_KEYS.has(ev.key)) {
      ev.preventDefault()
      session.keyDown(ev.key)
    }
  })
  window.addEventListener('keyup', (ev) => session.keyUp(ev.key))

  recordBtn.addEventListener('click', () => {
    session.setRecording(!session.recording)
    recordBtn.textContent = session.recording ? 'Recording: on' : 'Recording: off'
  })
  discardBtn.addEventListener('click', () => session.discard())
  resetBtn.addEventListener('click', () => session.reset())

  connect(session, addrInput.value)
  setInterval(() => session.tick(), TICK_MS)
}

start()
