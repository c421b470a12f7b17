"""Self-contained constrained 2-D environments plus the tabular oracle MDP.

Two continuous tasks: a hazard-avoidance navigation task ("toygoal") and a
boundary-constrained circulation task ("toycircle"). Costs are geometric,
never shown to the learner, and recorded per step for evaluation only.
A scripted potential-field expert generates safe demonstrations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class EpisodeOver(RuntimeError):
    """step() was called after the episode finished."""


@dataclass
class StepResult:
    next_state: np.ndarray
    task_reward: float
    cost: float
    done: bool


@dataclass
class GoalMap:
    goal: np.ndarray
    goal_radius: float
    hazards: list[tuple[float, float, float]]  # (cx, cy, radius)
    start_low: np.ndarray
    start_high: np.ndarray
    arena_half: float


DEFAULT_GOAL_MAP = GoalMap(
    goal=np.array([1.0, 1.0]),
    goal_radius=0.2,
    hazards=[(0.0, 0.0, 0.35), (0.7, -0.05, 0.18), (-0.05, 0.7, 0.18)],
    start_low=np.array([-1.3, -1.3]),
    start_high=np.array([-0.7, -0.7]),
    arena_half=1.5,
)


def in_hazard(pos: np.ndarray, hazards: list[tuple[float, float, float]]) -> bool:
    for cx, cy, r in hazards:
        if (pos[0] - cx) ** 2 + (pos[1] - cy) ** 2 < r * r:
            return True
    return False


class ToyGoalEnv:
    """Reach the goal; hazard discs cost 1 per step spent inside.

    State: [pos(2), vel(2), goal - pos(2), hazard_i - pos(2) ...].
    Action: commanded velocity, clipped per component to [-1, 1], integrated
    with time step dt. Reward is the per-step decrease in goal distance plus
    a bonus on arrival.
    """

    env_id = "toygoal"
    action_dim = 2
    goal_bonus = 10.0

    def __init__(self, game_map: GoalMap | None = None, dt: float = 0.1, max_episode_steps: int = 150, seed: int = 0):
        self.map = game_map if game_map is not None else DEFAULT_GOAL_MAP
        self.dt = dt
        self.max_episode_steps = max_episode_steps
        self.state_dim = 6 + 2 * len(self.map.hazards)
        self.action_low = np.full(2, -1.0)
        self.action_high = np.full(2, 1.0)
        self._rng = np.random.default_rng(seed)
        self._pos = np.zeros(2)
        self._vel = np.zeros(2)
        self._steps = 0
        self._done = True

    def _obs(self) -> np.ndarray:
        parts = [self._pos, self._vel, self.map.goal - self._pos]
        for cx, cy, _ in self.map.hazards:
            parts.append(np.array([cx, cy]) - self._pos)
        return np.concatenate(parts)

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        # rejection-sample a start outside every hazard disc
        for _ in range(1000):
            pos = self._rng.uniform(self.map.start_low, self.map.start_high)
            if not in_hazard(pos, self.map.hazards):
                break
        else:
            raise RuntimeError("could not sample a hazard-free start position")
        self._pos = pos
        self._vel = np.zeros(2)
        self._steps = 0
        self._done = False
        return self._obs()

    def step(self, action: np.ndarray) -> StepResult:
        if self._done:
            raise EpisodeOver("episode finished; call reset()")
        a = np.clip(np.asarray(action, dtype=np.float64), self.action_low, self.action_high)
        prev_dist = float(np.linalg.norm(self.map.goal - self._pos))
        self._vel = a
        self._pos = np.clip(self._pos + self.dt * a, -self.map.arena_half, self.map.arena_half)
        new_dist = float(np.linalg.norm(self.map.goal - self._pos))
        reward = prev_dist - new_dist
        reached = new_dist < self.map.goal_radius
        if reached:
            reward += self.goal_bonus
        cost = 1.0 if in_hazard(self._pos, self.map.hazards) else 0.0
        self._steps += 1
        self._done = reached or self._steps >= self.max_episode_steps
        return StepResult(self._obs(), reward, cost, self._done)

    def scene(self, episode_reward: float, episode_cost: float) -> dict:
        return {
            "agent": [float(self._pos[0]), float(self._pos[1])],
            "goal": [float(self.map.goal[0]), float(self.map.goal[1])],
            "hazards": [[float(x), float(y), float(r)] for x, y, r in self.map.hazards],
            "boundary": None,
            "episode_cost": episode_cost,
            "episode_reward": episode_reward,
            "bounds": [-self.map.arena_half, -self.map.arena_half, self.map.arena_half, self.map.arena_half],
        }


class ToyCircleEnv:
    """Circulate along a reference circle; |x| beyond the half-width costs 1 per step.

    State: [pos(2), vel(2)]. Reward is the velocity component along the
    counter-clockwise tangent of the reference circle at the current position.
    Episodes end on the step limit only.
    """

    env_id = "toycircle"
    action_dim = 2

    def __init__(self, radius: float = 1.0, half_width: float = 0.8, dt: float = 0.1, max_episode_steps: int = 300, seed: int = 0):
        self.radius = radius
        self.half_width = half_width
        self.dt = dt
        self.max_episode_steps = max_episode_steps
        self.state_dim = 4
        self.action_low = np.full(2, -1.0)
        self.action_high = np.full(2, 1.0)
        self.arena_half = radius + 0.5
        self._rng = np.random.default_rng(seed)
        self._pos = np.zeros(2)
        self._vel = np.zeros(2)
        self._steps = 0
        self._done = True

    def _obs(self) -> np.ndarray:
        return np.concatenate([self._pos, self._vel])

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        # rejection-sample near the reference circle, inside the permitted band
        for _ in range(1000):
            pos = self._rng.uniform(-self.arena_half, self.arena_half, size=2)
            rad = float(np.linalg.norm(pos))
            if 0.7 * self.radius <= rad <= 1.1 * self.radius and abs(pos[0]) <= 0.8 * self.half_width:
                break
        else:
            raise RuntimeError("could not sample an in-band start position")
        self._pos = pos
        self._vel = np.zeros(2)
        self._steps = 0
        self._done = False
        return self._obs()

    def step(self, action: np.ndarray) -> StepResult:
        if self._done:
            raise EpisodeOver("episode finished; call reset()")
        a = np.clip(np.asarray(action, dtype=np.float64), self.action_low, self.action_high)
        rad = float(np.linalg.norm(self._pos))
        if rad > 1e-9:
            tangent = np.array([-self._pos[1], self._pos[0]]) / rad
        else:
            tangent = np.zeros(2)
        reward = float(a @ tangent)
        self._vel = a
        self._pos = np.clip(self._pos + self.dt * a, -self.arena_half, self.arena_half)
        cost = 1.0 if abs(self._pos[0]) > self.half_width else 0.0
        self._steps += 1
        self._done = self._steps >= self.max_episode_steps
        return StepResult(self._obs(), reward, cost, self._done)

    def scene(self, episode_reward: float, episode_cost: float) -> dict:
        return {
            "agent": [float(self._pos[0]), float(self._pos[1])],
            "goal": [0.0, 0.0],
            "hazards": [],
            "boundary": self.half_width,
            "episode_cost": episode_cost,
            "episode_reward": episode_reward,
            "bounds": [-self.arena_half, -self.arena_half, self.arena_half, self.arena_half],
        }


def scripted_expert(env, state: np.ndarray) -> np.ndarray:
    """Potential-field controller for the two continuous tasks.

    Goal task: unit attraction to the goal plus radial repulsion from hazard
    discs inside a margin. Circle task: counter-clockwise tangential motion
    with radial correction and a push away from the |x| boundary.
    """
    if isinstance(env, ToyGoalEnv):
        pos = np.asarray(state[:2], dtype=np.float64)
        to_goal = env.map.goal - pos
        dist = float(np.linalg.norm(to_goal))
        direction = to_goal / dist if dist > 1e-12 else np.zeros(2)
        margin = 0.45
        push = np.zeros(2)
        for cx, cy, r in env.map.hazards:
            offset = pos - np.array([cx, cy])
            d_surf = float(np.linalg.norm(offset)) - r
            if d_surf < margin:
                radial = offset / max(float(np.linalg.norm(offset)), 1e-9)
                push += radial * 2.0 * (margin - max(d_surf, 0.0)) / margin
        total = direction + push
        n = float(np.linalg.norm(total))
        return total / n if n > 1e-12 else total
    if isinstance(env, ToyCircleEnv):
        pos = np.asarray(state[:2], dtype=np.float64)
        rad = float(np.linalg.norm(pos))
        if rad < 1e-9:
            return np.array([0.0, 1.0])
        radial = pos / rad
        tangent = np.array([-radial[1], radial[0]])
        v = tangent + 1.5 * (env.radius - rad) * radial
        x_margin = 0.8 * env.half_width
        if pos[0] > x_margin and v[0] > 0:
            v[0] = -2.0 * (pos[0] - x_margin)
        elif pos[0] < -x_margin and v[0] < 0:
            v[0] = -2.0 * (pos[0] + x_margin)
        n = float(np.linalg.norm(v))
        return v / n if n > 1e-12 else v
    raise TypeError(f"no scripted expert for {type(env).__name__}")


ENV_IDS = ("toygoal", "toycircle", "grid")


def make_env(env_id: str, seed: int = 0, **kwargs):
    if env_id == "toygoal":
        return ToyGoalEnv(seed=seed, **kwargs)
    if env_id == "toycircle":
        return ToyCircleEnv(seed=seed, **kwargs)
    if env_id == "grid":
        raise ValueError("'grid' is the tabular oracle fixture (see default_grid); it is not a trainable session")
    raise ValueError(f"unknown env id {env_id!r}; expected one of {ENV_IDS}")


@dataclass
class TabularMDP:
    """Finite MDP with binary safety labels for the value-bound oracle."""

    n_states: int
    n_actions: int
    transition: np.ndarray       # (S, A) -> next state, deterministic
    task_reward: np.ndarray      # (S, A), >= 0
    safe: np.ndarray             # (S,) bool
    safety_penalty: np.ndarray   # (S,), <= 0
    demo_support: list[tuple[int, int]]
    horizon: int
    gamma: float

    def check_structure(self) -> None:
        """Shape/range checks that every consumer requires."""
        if self.transition.shape != (self.n_states, self.n_actions):
            raise ValueError("transition table shape mismatch")
        if np.any(self.transition < 0) or np.any(self.transition >= self.n_states):
            raise ValueError("transition target out of range")
        for s, a in self.demo_support:
            if not (0 <= s < self.n_states and 0 <= a < self.n_actions):
                raise ValueError(f"support pair ({s}, {a}) out of range")
            if not self.safe[s]:
                raise ValueError(f"support state {s} is not labeled safe")

    def check_invariants(self) -> None:
        """Structure plus the reward-sign hypotheses (r_s <= 0 <= r_d)."""
        self.check_structure()
        if np.any(self.task_reward < 0):
            raise ValueError("task rewards must be non-negative")
        if np.any(self.safety_penalty > 0):
            raise ValueError("safety penalties must be non-positive")

    def to_doc(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "transition": self.transition.tolist(),
            "task_reward": self.task_reward.tolist(),
            "safe": [bool(x) for x in self.safe],
            "safety_penalty": self.safety_penalty.tolist(),
            "demo_support": [[int(s), int(a)] for s, a in self.demo_support],
            "horizon": self.horizon,
            "gamma": self.gamma,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "TabularMDP":
        mdp = cls(
            n_states=int(doc["n_states"]),
            n_actions=int(doc["n_actions"]),
            transition=np.array(doc["transition"], dtype=np.int64),
            task_reward=np.array(doc["task_reward"], dtype=np.float64),
            safe=np.array(doc["safe"], dtype=bool),
            safety_penalty=np.array(doc["safety_penalty"], dtype=np.float64),
            demo_support=[(int(s), int(a)) for s, a in doc["demo_support"]],
            horizon=int(doc["horizon"]),
            gamma=float(doc["gamma"]),
        )
        mdp.check_invariants()
        return mdp

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_doc(), f)

    @classmethod
    def load(cls, path: str) -> "TabularMDP":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_doc(json.load(f))


def default_grid() -> tuple[TabularMDP, np.ndarray]:
    """4x4 gridworld with a 2-cell unsafe strip and a safe demonstrated path.

    Returns the MDP and the demonstration policy. Actions: 0 right, 1 up,
    2 left, 3 down; moves off the grid stay in place.
    """
    w = h = 4
    n_states = w * h
    n_actions = 4
    moves = [(1, 0), (0, 1), (-1, 0), (0, -1)]

    def sid(x: int, y: int) -> int:
        return y * w + x

    transition = np.zeros((n_states, n_actions), dtype=np.int64)
    for y in range(h):
        for x in range(w):
            for a, (dx, dy) in enumerate(moves):
                nx, ny = min(max(x + dx, 0), w - 1), min(max(y + dy, 0), h - 1)
                transition[sid(x, y), a] = sid(nx, ny)

    unsafe = {sid(1, 1), sid(2, 1)}
    safe = np.array([s not in unsafe for s in range(n_states)])
    task_reward = np.ones((n_states, n_actions))
    safety_penalty = np.where(safe, 0.0, -1.0)

    # demonstrated loop around the unsafe strip along the bottom and row 2
    path = [sid(0, 0), sid(1, 0), sid(2, 0), sid(3, 0), sid(3, 1), sid(3, 2),
            sid(2, 2), sid(1, 2), sid(0, 2), sid(0, 1)]
    demo_policy = np.zeros(n_states, dtype=np.int64)
    demo_support = []
    for i, s in enumerate(path):
        nxt = path[(i + 1) % len(path)]
        for a in range(n_actions):
            if transition[s, a] == nxt:
                demo_policy[s] = a
                demo_support.append((s, a))
                break
        else:
            raise AssertionError("demo path step is not a legal move")

    mdp = TabularMDP(
        n_states=n_states,
        n_actions=n_actions,
        transition=transition,
        task_reward=task_reward,
        safe=safe,
        safety_penalty=safety_penalty,
        demo_support=demo_support,
        horizon=12,
        gamma=0.9,
    )
    mdp.check_invariants()
    return mdp, demo_policy
