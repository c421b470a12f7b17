// Session flow, kept free of DOM and WebSocket specifics so tests can drive
// it with synthetic key events over any transport.
//
// One action per tick, and only when the previous state response has arrived:
// the outgoing queue never holds more than one in-flight action, so key
// repeat cannot burst.
import { keyToAction } from './keys.js';
export class TeleopSession {
    constructor(events = {}, firstSeed = 0) {
        this.events = events;
        this.transport = null;
        this.pressed = new Set();
        this.awaitingState = false;
        this.done = true;
        this.recording = false;
        this.status = 'connecting';
        this.scene = null;
        this.episodesRetained = 0;
        this.seedCounter = firstSeed;
    }
    attach(transport) {
        this.transport = transport;
        this.setStatus('open');
    }
    detach() {
        this.transport = null;
        this.awaitingState = false;
        this.setStatus('closed');
    }
    setStatus(s) {
        this.status = s;
        this.events.onStatus?.(s);
    }
    setPressedKeys(keys) {
        this.pressed = new Set(keys);
    }
    keyDown(key) {
        this.pressed.add(key);
    }
    keyUp(key) {
        this.pressed.delete(key);
    }
    setRecording(on) {
        this.recording = on;
        this.transport?.send({ type: 'record', on });
    }
    discard() {
        this.transport?.send({ type: 'discard' });
    }
    reset(seed) {
        if (!this.transport)
            return;
        const s = seed ?? this.seedCounter++;
        this.awaitingState = true;
        this.done = false;
        this.transport.send({ type: 'reset', seed: s });
    }
    /** Called at the fixed tick rate: zero-order hold of the current key state. */
    tick() {
        if (!this.transport || this.done || this.awaitingState)
            return;
        const [x, y] = keyToAction(this.pressed);
        this.awaitingState = true;
        this.transport.send({ type: 'action', a: [x, y] });
    }
    handleServer(msg) {
        switch (msg.type) {
            case 'state':
                this.awaitingState = false;
                this.done = msg.done;
                this.scene = msg.scene;
                this.events.onScene?.(msg.scene, msg.done);
                break;
            case 'notice':
                if (msg.retained)
                    this.episodesRetained += 1;
                this.events.onNotice?.(msg.retained, msg.episode_cost, msg.msg);
                break;
            case 'error':
                this.awaitingState = false;
                this.events.onError?.(msg.msg);
                break;
        }
    }
}
