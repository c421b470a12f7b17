"""Flat key = value run configuration.

Unknown keys are hard errors: a silent typo in an ablation flag would
invalidate an experiment. Every run writes its resolved configuration into
the output directory, and that file alone is enough to rebuild the run.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import envs
from .agent import ALGOS, VARIANTS, TrainerConfig


class ConfigError(ValueError):
    pass


def _parse_bool(v: str) -> bool:
    if v.lower() in ("true", "1", "yes"):
        return True
    if v.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {v!r}")


@dataclass
class RunConfig:
    env: str = "toygoal"
    algo: str = "anchorq"
    seed: int = 0
    variant: str = "original"
    demo_file: str = ""
    out_dir: str = ""

    gamma: float = 0.99
    lr: float = 3e-4
    alpha_lr: float = 3e-4
    disc_lr: float = 3e-4
    batch_size: int = 64
    eta: float = 0.005
    alpha0: float = 1.0
    target_entropy: float = float("nan")  # nan = -action_dim
    warmup_steps: int = 1000
    total_steps: int = 50000
    buffer_capacity: int = 10**6
    lambda_gp: float = 0.005
    hidden: str = "32,32"
    disc_hidden: str = "32,32"
    log_std_init: float = -3.0
    gate_threshold: bool = False
    anchor_normalize: bool = False

    eval_episodes: int = 40
    eval_seeds: int = 3
    eval_every: int = 2000
    quick_eval_episodes: int = 5
    checkpoint_every: int = 10000
    pooled_stats: bool = False
    safe_only: bool = True
    collect_attempt_cap: int = 1000
    teleop_port: int = 8765

    max_episode_steps: int = 0  # 0 = env default
    dt: float = 0.1
    map_goal: str = "1,1"
    map_goal_radius: float = 0.2
    map_hazards: str = "0,0,0.35;0.7,-0.05,0.18;-0.05,0.7,0.18"
    map_start: str = "-1.3,-1.3,-0.7,-0.7"
    map_arena_half: float = 1.5
    circle_radius: float = 1.0
    circle_half_width: float = 0.8

    def validate(self) -> "RunConfig":
        if self.algo not in ALGOS:
            raise ConfigError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.env not in envs.ENV_IDS:
            raise ConfigError(f"env must be one of {envs.ENV_IDS}, got {self.env!r}")
        if not (0.0 <= self.gamma <= 1.0):
            raise ConfigError("gamma must lie in [0, 1]")
        if self.batch_size <= 0 or self.total_steps < 0 or self.warmup_steps < 0:
            raise ConfigError("batch_size must be positive; step counts must be non-negative")
        if not (0.0 < self.eta < 1.0):
            raise ConfigError("eta must lie in (0, 1)")
        return self

    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(int(x) for x in self.hidden.split(","))

    def disc_hidden_sizes(self) -> tuple[int, ...]:
        return tuple(int(x) for x in self.disc_hidden.split(","))

    def goal_map(self) -> envs.GoalMap:
        gx, gy = (float(v) for v in self.map_goal.split(","))
        hazards = []
        if self.map_hazards.strip():
            for block in self.map_hazards.split(";"):
                cx, cy, r = (float(v) for v in block.split(","))
                hazards.append((cx, cy, r))
        x0, y0, x1, y1 = (float(v) for v in self.map_start.split(","))
        return envs.GoalMap(
            goal=np.array([gx, gy]),
            goal_radius=self.map_goal_radius,
            hazards=hazards,
            start_low=np.array([x0, y0]),
            start_high=np.array([x1, y1]),
            arena_half=self.map_arena_half,
        )

    def make_env(self, seed: int = 0):
        if self.env == "toygoal":
            steps = self.max_episode_steps or 150
            return envs.ToyGoalEnv(self.goal_map(), dt=self.dt, max_episode_steps=steps, seed=seed)
        if self.env == "toycircle":
            steps = self.max_episode_steps or 300
            return envs.ToyCircleEnv(self.circle_radius, self.circle_half_width,
                                     dt=self.dt, max_episode_steps=steps, seed=seed)
        raise ConfigError(f"env {self.env!r} is not a trainable session")

    def trainer_config(self) -> TrainerConfig:
        te = None if np.isnan(self.target_entropy) else self.target_entropy
        return TrainerConfig(
            algo=self.algo, variant=self.variant, gamma=self.gamma, lr=self.lr,
            alpha_lr=self.alpha_lr, disc_lr=self.disc_lr, batch_size=self.batch_size,
            eta=self.eta, alpha0=self.alpha0, target_entropy=te,
            warmup_steps=self.warmup_steps, buffer_capacity=self.buffer_capacity,
            lambda_gp=self.lambda_gp, hidden=self.hidden_sizes(),
            disc_hidden=self.disc_hidden_sizes(), log_std_init=self.log_std_init,
            gate_threshold=self.gate_threshold,
            anchor_normalize=self.anchor_normalize,
        )


_FIELDS = {f.name: f.type for f in fields(RunConfig)}


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base if base is not None else RunConfig()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _FIELDS:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
        kind = _FIELDS[key]
        try:
            if kind in ("int", int):
                parsed = int(value)
            elif kind in ("float", float):
                parsed = float(value)
            elif kind in ("bool", bool):
                parsed = _parse_bool(value)
            else:
                parsed = value
        except ValueError as exc:
            raise ConfigError(f"line {line_no}: bad value for {key}: {exc}") from exc
        setattr(cfg, key, parsed)
    return cfg.validate()


def load_config(path: str, base: RunConfig | None = None) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read(), base)


def config_to_text(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def save_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(config_to_text(cfg))
