// Scripted browser session against the real collection server: synthetic key
// events drive the session logic over a live WebSocket, one safe episode is
// recorded, and the python side then loads the file, interleaves it with
// scripted demonstrations, and runs one learner update on the mix.
import assert from 'node:assert/strict';
import { test } from 'node:test';
import { spawn, spawnSync } from 'node:child_process';
import { mkdtempSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import WebSocket from 'ws';
import { TeleopSession } from '../src/session.js';
const PYTHON = process.env.PYTHON ?? 'python3';
function startServer(outPath) {
    const proc = spawn(PYTHON, [
        '-m', 'anchorq.cli', 'collect', '--env', 'toygoal', '--mode', 'teleop',
        '--episodes', '1', '--safe-only', '--out', outPath, '--port', '0',
    ], { stdio: ['ignore', 'pipe', 'pipe'] });
    return new Promise((resolve, reject) => {
        let buf = '';
        proc.stdout.on('data', (chunk) => {
            buf += String(chunk);
            const m = buf.match(/teleop server on port (\d+)/);
            if (m)
                resolve({ port: Number(m[1]), proc });
        });
        proc.stderr.on('data', (chunk) => process.stderr.write(chunk));
        proc.on('exit', (code) => reject(new Error(`server exited early (${code}): ${buf}`)));
        setTimeout(() => reject(new Error('server did not announce a port')), 15000);
    });
}
test('scripted session records one zero-cost episode the learner can train on', async () => {
    const dir = mkdtempSync(join(tmpdir(), 'teleop-'));
    const demoPath = join(dir, 'human.jsonl');
    const { port, proc } = await startServer(demoPath);
    const ws = new WebSocket(`ws://127.0.0.1:${port}`);
    await new Promise((resolve, reject) => {
        ws.on('open', () => resolve());
        ws.on('error', reject);
    });
    const inbox = [];
    const waiters = [];
    ws.on('message', (data) => {
        const msg = JSON.parse(String(data));
        const w = waiters.shift();
        if (w)
            w(msg);
        else
            inbox.push(msg);
    });
    const nextMsg = () => {
        const queued = inbox.shift();
        if (queued)
            return Promise.resolve(queued);
        return new Promise((resolve) => waiters.push(resolve));
    };
    const transport = {
        send: (msg) => ws.send(JSON.stringify(msg)),
        close: () => ws.close(),
    };
    const flags = { done: false, retained: null, states: 0 };
    const session = new TeleopSession({
        onScene: (_scene, isDone) => {
            flags.states += 1;
            flags.done = isDone;
        },
        onNotice: (ok) => { flags.retained = ok; },
    });
    session.attach(transport);
    session.setRecording(true);
    session.handleServer(await nextMsg()); // recording notice
    session.reset(3);
    session.handleServer(await nextMsg()); // initial state
    assert.ok(session.scene, 'reset must deliver a scene');
    // drive an L-shaped safe route with synthetic key events: east until level
    // with the goal, then north; every tick sends exactly one action
    let actionsSent = 0;
    for (let step = 0; step < 400 && !flags.done; step++) {
        const { agent, goal } = session.scene;
        session.setPressedKeys(new Set(agent[0] < goal[0] ? ['ArrowRight'] : ['ArrowUp']));
        session.tick();
        actionsSent += 1;
        session.handleServer(await nextMsg());
        if (flags.done)
            session.handleServer(await nextMsg()); // retained/dropped notice
    }
    assert.ok(flags.done, 'episode must finish');
    assert.equal(flags.retained, true, 'safe episode must be retained');
    assert.equal(session.scene.episode_cost, 0);
    assert.equal(flags.states, actionsSent + 1, 'exactly one state response per action');
    assert.equal(session.episodesRetained, 1);
    ws.close();
    await new Promise((resolve) => proc.on('exit', () => resolve()));
    // the recorded file must load, interleave with scripted demos, and support
    // one learner update without error
    const check = spawnSync(PYTHON, ['-c', `
import sys
import numpy as np
from anchorq.buffers import load_demos, merge_demo_files
from anchorq.config import RunConfig
from anchorq.train import collect_scripted
from anchorq.agent import Trainer

human_path = ${JSON.stringify(demoPath)}
scripted_path = ${JSON.stringify(join(dir, 'scripted.jsonl'))}
mixed_path = ${JSON.stringify(join(dir, 'mixed.jsonl'))}

human = load_demos(human_path, safe_only=True)
assert len(human.episodes()) == 1, "expected one retained episode"
steps = sorted(t.step_index for t in human.transitions)
assert steps == list(range(len(steps))), "step indices must increase monotonically"
assert sum(t.cost for t in human.transitions) == 0.0

cfg = RunConfig()
collect_scripted(cfg, 2, scripted_path)
n_eps = merge_demo_files([scripted_path, human_path], mixed_path)
assert n_eps == 3
mixed = load_demos(mixed_path, safe_only=True)
assert len(mixed.episodes()) == 3

tcfg = cfg.trainer_config()
tcfg.warmup_steps = 10
tcfg.batch_size = 8
tr = Trainer(tcfg, cfg.make_env(seed=0), mixed, seed=0)
for _ in range(12):
    d = tr.train_step()
assert np.isfinite(d["critic_loss"])
print("python-side verification ok")
`], { encoding: 'utf-8' });
    assert.equal(check.status, 0, `python verification failed:\n${check.stdout}\n${check.stderr}`);
    assert.match(check.stdout, /python-side verification ok/);
});
