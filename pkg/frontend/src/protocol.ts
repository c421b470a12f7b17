// JSON messages spoken with the teleop server. The client holds no
// environment logic: everything it renders comes from the scene block.

export interface Scene {
  agent: [number, number]
  goal: [number, number]
  hazards: [number, number, number][]
  boundary: number | null
  episode_cost: number
  episode_reward: number
  bounds?: [number, number, number, number]
}

export interface StateMsg {
  type: 'state'
  s: number[]
  r: number
  c: number
  done: boolean
  scene: Scene
}

export interface NoticeMsg {
  type: 'notice'
  retained: boolean
  episode_cost: number
  msg: string
}

export interface ErrorMsg {
  type: 'error'
  msg: string
}

export type ServerMsg = StateMsg | NoticeMsg | ErrorMsg

export type ClientMsg =
  | { type: 'reset'; seed: number }
  | { type: 'action'; a: number[] }
  | { type: 'record'; on: boolean }
  | { type: 'discard' }
