"""Training-loop driver: run directories, CSV logs, checkpoints, collection.

A run directory is self-contained: resolved config, log.csv, and checkpoints
are all that cmd_eval needs. Log lines are written with repr() floats so two
runs with the same config, seed, and demo file produce byte-identical CSVs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import buffers
from .agent import DIAG_KEYS, Actor, CriticPair, Trainer
from .analysis import evaluate_actor
from .buffers import DemoSet, Transition, load_demos
from .config import RunConfig, save_config
from .discriminator import Discriminator
from .envs import scripted_expert
from .nets import AdamState, NonFiniteError, net_from_doc, net_to_doc

BUNDLE_VERSION = 1
LOG_COLUMNS = ("step", "eval_reward", "eval_cost") + DIAG_KEYS


class RunHalted(RuntimeError):
    """Training stopped on a non-finite loss; the offending step is logged."""


def bundle_to_doc(trainer: Trainer, cfg: RunConfig, step: int) -> dict:
    doc = {
        "format_version": BUNDLE_VERSION,
        "algo": cfg.algo,
        "env": cfg.env,
        "step": step,
        "config": cfg.__dict__.copy(),
        "log_alpha": float(trainer.tuner.log_alpha),
        "alpha_adam": net_adam_doc(trainer.tuner.adam),
        "nets": {
            "actor": net_to_doc(trainer.actor.net, trainer.actor.adam),
            "q1": net_to_doc(trainer.critics.q1, trainer.critics.adam1),
            "q2": net_to_doc(trainer.critics.q2, trainer.critics.adam2),
            "target_q1": net_to_doc(trainer.critics.target_q1),
            "target_q2": net_to_doc(trainer.critics.target_q2),
        },
    }
    if trainer.disc is not None:
        doc["nets"]["disc"] = net_to_doc(trainer.disc.net, trainer.disc.adam)
        doc["disc_gp"] = trainer.disc.gp_coefficient
    return doc


def net_adam_doc(adam: AdamState) -> dict:
    return {
        "step_count": adam.step_count,
        "learning_rate": adam.learning_rate,
        "first_moment": [m.tolist() for m in adam.first_moment],
        "second_moment": [v.tolist() for v in adam.second_moment],
    }


def save_bundle(path: str, trainer: Trainer, cfg: RunConfig, step: int) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(bundle_to_doc(trainer, cfg, step), f)


@dataclass
class LoadedBundle:
    cfg: RunConfig
    actor: Actor
    critics: CriticPair
    disc: Discriminator | None
    log_alpha: float
    step: int


def load_bundle(path: str) -> LoadedBundle:
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("format_version") != BUNDLE_VERSION:
        raise ValueError(f"unsupported bundle version {doc.get('format_version')!r}")
    cfg = RunConfig(**doc["config"]).validate()
    env = cfg.make_env(seed=0)
    actor_net, actor_adam = net_from_doc(doc["nets"]["actor"])
    if actor_net.in_dim != env.state_dim:
        raise ValueError(
            f"checkpoint state dim {actor_net.in_dim} does not match env {cfg.env} ({env.state_dim})"
        )
    actor = Actor(net=actor_net, adam=actor_adam, action_low=env.action_low, action_high=env.action_high)
    q1, adam1 = net_from_doc(doc["nets"]["q1"])
    q2, adam2 = net_from_doc(doc["nets"]["q2"])
    t1, _ = net_from_doc(doc["nets"]["target_q1"])
    t2, _ = net_from_doc(doc["nets"]["target_q2"])
    critics = CriticPair(q1=q1, q2=q2, target_q1=t1, target_q2=t2, adam1=adam1, adam2=adam2)
    disc = None
    if "disc" in doc["nets"]:
        dnet, dadam = net_from_doc(doc["nets"]["disc"])
        disc = Discriminator(net=dnet, adam=dadam, gp_coefficient=doc.get("disc_gp", 0.0))
    return LoadedBundle(cfg, actor, critics, disc, float(doc["log_alpha"]), int(doc["step"]))


def _fmt(v: float) -> str:
    return repr(float(v))


def run_training(cfg: RunConfig, out_dir: str, config_source_text: str | None = None) -> str:
    """Execute one training run into out_dir; returns the run directory path."""
    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    if config_source_text is not None:
        with open(os.path.join(out_dir, "config.orig.txt"), "w", encoding="utf-8") as f:
            f.write(config_source_text)
    save_config(cfg, os.path.join(out_dir, "config.txt"))

    demos: DemoSet | None = None
    if cfg.algo != "sac":
        if not cfg.demo_file or not os.path.exists(cfg.demo_file):
            raise FileNotFoundError(f"algo {cfg.algo!r} requires a demo file; {cfg.demo_file!r} not found")
        demos = load_demos(cfg.demo_file, safe_only=cfg.safe_only)
        if len(demos) == 0:
            raise ValueError(f"demo file {cfg.demo_file!r} holds no usable episodes")

    env = cfg.make_env(seed=cfg.seed)
    trainer = Trainer(cfg.trainer_config(), env, demos, seed=cfg.seed)
    save_bundle(os.path.join(out_dir, "checkpoint_initial.json"), trainer, cfg, 0)

    log_path = os.path.join(out_dir, "log.csv")
    sums = {k: 0.0 for k in DIAG_KEYS}
    count = 0
    with open(log_path, "w", encoding="utf-8", newline="") as log:
        log.write(",".join(LOG_COLUMNS) + "\n")
        for step in range(1, cfg.total_steps + 1):
            try:
                diags = trainer.train_step()
            except NonFiniteError as exc:
                with open(os.path.join(out_dir, "halted.txt"), "w", encoding="utf-8") as f:
                    f.write(f"step={step} error={exc}\n")
                raise RunHalted(f"non-finite loss at step {step}: {exc}") from exc
            for k in DIAG_KEYS:
                sums[k] += diags[k]
            count += 1
            if cfg.eval_every > 0 and step % cfg.eval_every == 0:
                stats, _ = evaluate_actor(
                    trainer.actor, lambda: cfg.make_env(seed=0),
                    episodes=cfg.quick_eval_episodes, seeds=1, algo=cfg.algo,
                )
                means = [sums[k] / count for k in DIAG_KEYS]
                row = [str(step), _fmt(stats.reward_mean), _fmt(stats.cost_mean)] + [_fmt(v) for v in means]
                log.write(",".join(row) + "\n")
                sums = {k: 0.0 for k in DIAG_KEYS}
                count = 0
            if cfg.checkpoint_every > 0 and step % cfg.checkpoint_every == 0:
                save_bundle(os.path.join(out_dir, f"checkpoint_{step}.json"), trainer, cfg, step)
    save_bundle(os.path.join(out_dir, "checkpoint_final.json"), trainer, cfg, cfg.total_steps)
    return out_dir


def collect_scripted(
    cfg: RunConfig, episodes: int, out_path: str, safe_only: bool = True
) -> tuple[int, int]:
    """Run the scripted expert until `episodes` retained episodes are written.

    Returns (retained, attempts). Aborts once the attempt cap is hit.
    """
    env = cfg.make_env(seed=cfg.seed)
    transitions: list[Transition] = []
    retained = attempts = 0
    rng = np.random.default_rng(cfg.seed)
    while retained < episodes:
        if attempts >= cfg.collect_attempt_cap:
            raise RuntimeError(
                f"expert failed to produce {episodes} retained episodes in {attempts} attempts"
            )
        attempts += 1
        episode: list[Transition] = []
        state = env.reset(seed=int(rng.integers(2**31)))
        total_cost = 0.0
        t = 0
        while True:
            action = scripted_expert(env, state)
            res = env.step(action)
            episode.append(Transition(
                state=state, action=np.asarray(action, dtype=np.float64),
                task_reward=res.task_reward, cost=res.cost,
                next_state=res.next_state, next_action=None, done=res.done,
                episode_id=retained, step_index=t,
            ))
            total_cost += res.cost
            state = res.next_state
            t += 1
            if res.done:
                break
        if safe_only and total_cost > 0.0:
            continue
        for i in range(len(episode) - 1):
            episode[i].next_action = episode[i + 1].action
        transitions.extend(episode)
        retained += 1
    buffers.save_demos(transitions, out_path)
    return retained, attempts
