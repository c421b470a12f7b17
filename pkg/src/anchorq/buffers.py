"""Rollout replay buffer, demonstration buffer, and nearest-state retrieval.

Demonstrations are JSON Lines, one transition per line:
{"ep": int, "t": int, "s": [f64], "a": [f64], "r": f64, "c": f64,
 "s_next": [f64], "a_next": [f64] | null, "done": bool}
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class BufferError(ValueError):
    pass


class DemoFormatError(ValueError):
    """Malformed demonstration file; message carries the line number."""


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    task_reward: float
    cost: float                      # evaluation only, never shown to the learner
    next_state: np.ndarray
    next_action: np.ndarray | None   # demonstrations only; absent at episode end
    done: bool
    episode_id: int = 0
    step_index: int = 0


@dataclass
class Anchor:
    """Demonstration tuple retrieved for one rollout state."""

    index: int
    state: np.ndarray
    action: np.ndarray
    task_reward: float
    next_state: np.ndarray
    next_action: np.ndarray


class ReplayBuffer:
    """FIFO ring of transitions; uniform with-replacement sampling."""

    def __init__(self, capacity: int = 10**6, state_dim: int | None = None, action_dim: int | None = None):
        if capacity <= 0:
            raise BufferError("capacity must be positive")
        self.capacity = capacity
        self._state_dim = state_dim
        self._action_dim = action_dim
        self._alloc = 0
        self._size = 0
        self._cursor = 0
        self._states = self._actions = self._next_states = None
        self._rewards = self._dones = None

    def __len__(self) -> int:
        return self._size

    def _ensure_room(self) -> None:
        if self._alloc == 0:
            n = min(1024, self.capacity)
            self._states = np.zeros((n, self._state_dim))
            self._actions = np.zeros((n, self._action_dim))
            self._next_states = np.zeros((n, self._state_dim))
            self._rewards = np.zeros(n)
            self._dones = np.zeros(n)
            self._alloc = n
        elif self._size == self._alloc and self._alloc < self.capacity:
            n = min(self._alloc * 2, self.capacity)
            for name in ("_states", "_actions", "_next_states", "_rewards", "_dones"):
                old = getattr(self, name)
                grown = np.zeros((n,) + old.shape[1:])
                grown[: self._size] = old
                setattr(self, name, grown)
            self._alloc = n

    def push(self, t: Transition) -> None:
        if self._state_dim is None:
            self._state_dim = len(t.state)
            self._action_dim = len(t.action)
        self._ensure_room()
        i = self._cursor
        self._states[i] = t.state
        self._actions[i] = t.action
        self._next_states[i] = t.next_state
        self._rewards[i] = t.task_reward
        self._dones[i] = 1.0 if t.done else 0.0
        self._cursor = (self._cursor + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        if self._size == 0:
            raise BufferError("cannot sample from an empty buffer")
        idx = rng.integers(0, self._size, size=n)
        return {
            "state": self._states[idx].copy(),
            "action": self._actions[idx].copy(),
            "reward": self._rewards[idx].copy(),
            "next_state": self._next_states[idx].copy(),
            "done": self._dones[idx].copy(),
        }

    def contents(self) -> list[tuple]:
        """Stored rows oldest-first (for the FIFO eviction checks)."""
        order = np.arange(self._size)
        if self._size == self.capacity:
            order = (order + self._cursor) % self.capacity
        return [
            (self._states[i].copy(), self._actions[i].copy(), float(self._rewards[i]))
            for i in order
        ]


class DemoSet:
    """Immutable demonstration buffer with precomputed retrieval/sampling caches."""

    def __init__(self, transitions: list[Transition]):
        self.transitions = list(transitions)
        if self.transitions:
            dim = len(self.transitions[0].state)
            for i, t in enumerate(self.transitions):
                if len(t.state) != dim or len(t.next_state) != dim:
                    raise DemoFormatError(f"transition {i}: state dimension differs from the first transition")
            ts = self.transitions
            self.state_matrix = np.stack([t.state for t in ts])
            self.action_matrix = np.stack([t.action for t in ts])
            self.reward_vec = np.array([t.task_reward for t in ts])
            self.next_state_matrix = np.stack([t.next_state for t in ts])
            self.next_action_matrix = np.stack([
                (t.next_action if t.next_action is not None else np.zeros_like(t.action)) for t in ts
            ])
            # a missing next action only happens on terminal steps; targets drop the bootstrap there
            self.bootstrap_vec = np.array([
                0.0 if (t.done or t.next_action is None) else 1.0 for t in ts
            ])
            # terminal anchor fallback: the step stands in as its own successor
            self.anchor_next_state = np.stack([
                (t.next_state if t.next_action is not None else t.state) for t in ts
            ])
            self.anchor_next_action = np.stack([
                (t.next_action if t.next_action is not None else t.action) for t in ts
            ])
        else:
            self.state_matrix = np.zeros((0, 0))
        self.state_norms = np.linalg.norm(self.state_matrix, axis=1) if len(self.transitions) else np.zeros(0)
        self._has_zero_norm = bool(np.any(self.state_norms == 0.0)) if len(self.transitions) else True
        if len(self.transitions) and not self._has_zero_norm:
            # row-normalized states, transposed once, for the hot retrieval path
            self._unit_states_t = np.ascontiguousarray((self.state_matrix / self.state_norms[:, None]).T)
        else:
            self._unit_states_t = None
        if len(self.transitions):
            self.feature_mean = self.state_matrix.mean(axis=0)
            self.feature_std = self.state_matrix.std(axis=0)
        else:
            self.feature_mean = self.feature_std = np.zeros(0)
        self._standardized: "DemoSet | None" = None

    def standardized_view(self) -> "DemoSet":
        """Copy of this set with per-feature standardized states, for retrieval
        when raw feature scales would dominate the cosine."""
        if self._standardized is None:
            scale = np.where(self.feature_std > 0.0, self.feature_std, 1.0)
            view = DemoSet.__new__(DemoSet)
            view.__dict__.update(self.__dict__)
            std_states = (self.state_matrix - self.feature_mean) / scale
            view.state_matrix = std_states
            view.state_norms = np.linalg.norm(std_states, axis=1)
            view._has_zero_norm = bool(np.any(view.state_norms == 0.0))
            view._unit_states_t = (
                np.ascontiguousarray((std_states / view.state_norms[:, None]).T)
                if not view._has_zero_norm else None
            )
            view._standardized = view
            self._standardized = view
        return self._standardized

    def standardize_queries(self, queries: np.ndarray) -> np.ndarray:
        scale = np.where(self.feature_std > 0.0, self.feature_std, 1.0)
        return (np.asarray(queries, dtype=np.float64) - self.feature_mean) / scale

    def __len__(self) -> int:
        return len(self.transitions)

    def episodes(self) -> dict[int, list[Transition]]:
        eps: dict[int, list[Transition]] = {}
        for t in self.transitions:
            eps.setdefault(t.episode_id, []).append(t)
        return eps

    def anchor_at(self, index: int) -> Anchor:
        t = self.transitions[index]
        if t.next_action is None:
            # terminal demo step: reuse the step itself as its own successor
            return Anchor(index, t.state, t.action, t.task_reward, t.state, t.action)
        return Anchor(index, t.state, t.action, t.task_reward, t.next_state, t.next_action)

    def sample(self, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        if not self.transitions:
            raise BufferError("cannot sample from an empty demonstration set")
        idx = rng.integers(0, len(self.transitions), size=n)
        return {
            "state": self.state_matrix[idx],
            "action": self.action_matrix[idx],
            "reward": self.reward_vec[idx],
            "next_state": self.next_state_matrix[idx],
            "next_action": self.next_action_matrix[idx],
            "bootstrap": self.bootstrap_vec[idx],
        }

    def anchor_arrays(self, indices: np.ndarray) -> dict[str, np.ndarray]:
        return {
            "state": self.state_matrix[indices],
            "reward": self.reward_vec[indices],
            "next_state": self.anchor_next_state[indices],
            "next_action": self.anchor_next_action[indices],
        }


def similarity_matrix(demos: DemoSet, queries: np.ndarray) -> np.ndarray:
    """Cosine similarity of each query row to every stored state; zero-norm pairs score -1."""
    queries = np.asarray(queries, dtype=np.float64)
    sims = queries @ demos.state_matrix.T
    nz_cols = demos.state_norms > 0.0
    inv = np.zeros_like(demos.state_norms)
    inv[nz_cols] = 1.0 / demos.state_norms[nz_cols]
    sims *= inv[None, :]
    qn = np.linalg.norm(queries, axis=1)
    nz_rows = qn > 0.0
    sims[nz_rows] /= qn[nz_rows, None]
    sims[~nz_rows] = -1.0
    sims[:, ~nz_cols] = -1.0
    return sims


def cosine_similarities(demos: DemoSet, query: np.ndarray) -> np.ndarray:
    """Similarity of one query to every stored state; zero-norm pairs score -1."""
    return similarity_matrix(demos, np.asarray(query, dtype=np.float64)[None, :])[0]


def retrieve_anchor(demos: DemoSet, query_state: np.ndarray) -> Anchor:
    """Most-similar stored state by cosine similarity; lowest index on ties."""
    if len(demos) == 0:
        raise BufferError("cannot retrieve from an empty demonstration set")
    q = np.asarray(query_state, dtype=np.float64)
    if q.shape != (demos.state_matrix.shape[1],):
        raise BufferError(f"query dimension {q.shape} does not match stored states")
    sims = cosine_similarities(demos, q)
    return demos.anchor_at(int(np.argmax(sims)))


def retrieve_anchors(demos: DemoSet, queries: np.ndarray) -> list[Anchor]:
    return [demos.anchor_at(int(i)) for i in retrieve_anchor_indices(demos, queries)]


def retrieve_anchor_indices(demos: DemoSet, queries: np.ndarray) -> np.ndarray:
    if len(demos) == 0:
        raise BufferError("cannot retrieve from an empty demonstration set")
    queries = np.asarray(queries, dtype=np.float64)
    if demos._unit_states_t is not None and np.all(np.any(queries != 0.0, axis=1)):
        # per-row positive scaling by the query norm cannot change the argmax
        return np.argmax(queries @ demos._unit_states_t, axis=1)
    return np.argmax(similarity_matrix(demos, queries), axis=1)


def _transition_to_obj(t: Transition) -> dict:
    return {
        "ep": t.episode_id,
        "t": t.step_index,
        "s": [float(x) for x in t.state],
        "a": [float(x) for x in t.action],
        "r": float(t.task_reward),
        "c": float(t.cost),
        "s_next": [float(x) for x in t.next_state],
        "a_next": None if t.next_action is None else [float(x) for x in t.next_action],
        "done": bool(t.done),
    }


def _transition_from_obj(obj: dict, line_no: int) -> Transition:
    try:
        return Transition(
            state=np.array(obj["s"], dtype=np.float64),
            action=np.array(obj["a"], dtype=np.float64),
            task_reward=float(obj["r"]),
            cost=float(obj["c"]),
            next_state=np.array(obj["s_next"], dtype=np.float64),
            next_action=None if obj["a_next"] is None else np.array(obj["a_next"], dtype=np.float64),
            done=bool(obj["done"]),
            episode_id=int(obj["ep"]),
            step_index=int(obj["t"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DemoFormatError(f"line {line_no}: {exc}") from exc


def save_demos(demos: "DemoSet | list[Transition]", path: str) -> None:
    transitions = demos.transitions if isinstance(demos, DemoSet) else demos
    with open(path, "w", encoding="utf-8") as f:
        for t in transitions:
            f.write(json.dumps(_transition_to_obj(t)) + "\n")


def append_episode(transitions: list[Transition], path: str) -> None:
    with open(path, "a", encoding="utf-8") as f:
        for t in transitions:
            f.write(json.dumps(_transition_to_obj(t)) + "\n")


def merge_demo_files(paths: list[str], out_path: str) -> int:
    """Concatenate demo files, renumbering episodes so ids stay unique.

    Returns the number of episodes written. Required when interleaving
    recordings from different sessions, whose episode counters both start at 0.
    """
    merged: list[Transition] = []
    next_ep = 0
    for path in paths:
        demos = load_demos(path)
        remap: dict[int, int] = {}
        for t in demos.transitions:
            if t.episode_id not in remap:
                remap[t.episode_id] = next_ep
                next_ep += 1
            merged.append(Transition(
                state=t.state, action=t.action, task_reward=t.task_reward, cost=t.cost,
                next_state=t.next_state, next_action=t.next_action, done=t.done,
                episode_id=remap[t.episode_id], step_index=t.step_index,
            ))
    save_demos(merged, out_path)
    return next_ep


def load_demos(path: str, safe_only: bool = False) -> DemoSet:
    """Load a JSONL demo file; safe_only drops episodes with any positive cost."""
    transitions: list[Transition] = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DemoFormatError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
            transitions.append(_transition_from_obj(obj, line_no))
    if safe_only:
        cost_by_ep: dict[int, float] = {}
        for t in transitions:
            cost_by_ep[t.episode_id] = cost_by_ep.get(t.episode_id, 0.0) + t.cost
        transitions = [t for t in transitions if cost_by_ep[t.episode_id] == 0.0]
    return DemoSet(transitions)
