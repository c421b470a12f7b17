// Session flow, kept free of DOM and WebSocket specifics so tests can drive
// it with synthetic key events over any transport.
//
// One action per tick, and only when the previous state response has arrived:
// the outgoing queue never holds more than one in-flight action, so key
// repeat cannot burst.

import { keyToAction } from './keys.js'
import { ClientMsg, Scene, ServerMsg } from './protocol.js'

export interface Transport {
  send(msg: ClientMsg): void
  close(): void
}

export type ConnectionStatus = 'connecting' | 'open' | 'closed'

export interface SessionEvents {
  onScene?: (scene: Scene, done: boolean) => void
  onNotice?: (retained: boolean, episodeCost: number, msg: string) => void
  onError?: (msg: string) => void
  onStatus?: (status: ConnectionStatus) => void
}

export class TeleopSession {
  private transport: Transport | null = null
  private pressed = new Set<string>()
  private awaitingState = false
  private done = true
  private seedCounter: number
  recording = false
  status: ConnectionStatus = 'connecting'
  scene: Scene | null = null
  episodesRetained = 0

  constructor(private events: SessionEvents = {}, firstSeed = 0) {
    this.seedCounter = firstSeed
  }

  attach(transport: Transport): void {
    this.transport = transport
    this.setStatus('open')
  }

  detach(): void {
    this.transport = null
    this.awaitingState = false
    this.setStatus('closed')
  }

  private setStatus(s: ConnectionStatus): void {
    this.status = s
    this.events.onStatus?.(s)
  }

  setPressedKeys(keys: Set<string>): void {
    this.pressed = new Set(keys)
  }

  keyDown(key: string): void {
    this.pressed.add(key)
  }

  keyUp(key: string): void {
    this.pressed.delete(key)
  }

  setRecording(on: boolean): void {
    this.recording = on
    this.transport?.send({ type: 'record', on })
  }

  discard(): void {
    this.transport?.send({ type: 'discard' })
  }

  reset(seed?: number): void {
    if (!this.transport) return
    const s = seed ?? this.seedCounter++
    this.awaitingState = true
    this.done = false
    this.transport.send({ type: 'reset', seed: s })
  }

  /** Called at the fixed tick rate: zero-order hold of the current key state. */
  tick(): void {
    if (!this.transport || this.done || this.awaitingState) return
    const [x, y] = keyToAction(this.pressed)
    this.awaitingState = true
    this.transport.send({ type: 'action', a: [x, y] })
  }

  handleServer(msg: ServerMsg): void {
    switch (msg.type) {
      case 'state':
        this.awaitingState = false
        this.done = msg.done
        this.scene = msg.scene
        this.events.onScene?.(msg.scene, msg.done)
        break
      case 'notice':
        if (msg.retained) this.episodesRetained += 1
        this.events.onNotice?.(msg.retained, msg.episode_cost, msg.msg)
        break
      case 'error':
        this.awaitingState = false
        this.events.onError?.(msg.msg)
        break
    }
  }
}
