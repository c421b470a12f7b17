"""Independent brute-force verifiers.

These deliberately avoid the library code they check: the tabular Q solver
is plain backward induction, the retrieval oracle is a python loop, and the
gradient oracle is central finite differences. Test modules compare the fast
implementations against these.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .envs import TabularMDP


class PreconditionError(ValueError):
    """An oracle was invoked on an instance violating its stated hypotheses."""


@dataclass
class TabularQ:
    q: np.ndarray  # (n_states, n_actions)
    horizon: int
    gamma: float


def mixed_reward(mdp: TabularMDP, s: int, a: int) -> float:
    """Task reward on safe states, safety penalty elsewhere."""
    if mdp.safe[s]:
        return float(mdp.task_reward[s, a])
    return float(mdp.safety_penalty[s])


def evaluate_policy(mdp: TabularMDP, policy: np.ndarray) -> TabularQ:
    """Exact finite-horizon Q of `policy` under deterministic dynamics.

    policy is a state -> action table. Q[s, a] is the discounted sum of the
    mixed reward over `mdp.horizon` steps, acting with `a` first and with the
    policy afterwards.
    """
    policy = np.asarray(policy, dtype=np.int64)
    if policy.shape != (mdp.n_states,):
        raise PreconditionError("policy must assign an action to every state")
    mdp.check_structure()
    r = np.array(
        [[mixed_reward(mdp, s, a) for a in range(mdp.n_actions)] for s in range(mdp.n_states)]
    )
    q = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(mdp.horizon):
        # value of following the policy from each state under the current tail
        v = q[np.arange(mdp.n_states), policy]
        q = r + mdp.gamma * v[mdp.transition]
    return TabularQ(q=q, horizon=mdp.horizon, gamma=mdp.gamma)


def rollout_value(mdp: TabularMDP, policy: np.ndarray, s: int, a: int) -> float:
    """Forward-unrolled discounted return; the opposite-order check for evaluate_policy."""
    total = 0.0
    disc = 1.0
    cur_s, cur_a = s, int(a)
    for _ in range(mdp.horizon):
        total += disc * mixed_reward(mdp, cur_s, cur_a)
        cur_s = int(mdp.transition[cur_s, cur_a])
        cur_a = int(policy[cur_s])
        disc *= mdp.gamma
    return total


def verify_theorem(mdp: TabularMDP, policy: np.ndarray, demo_policy: np.ndarray) -> list[dict]:
    """Check the demonstration-bound inequality on every off-support pair.

    For each (s, a) with s outside the demonstrated support, Q^policy(s, a)
    must not exceed the minimum Q^demo over demonstrated pairs. Returns the
    list of violations (empty = verified on this instance). The reward-sign
    hypotheses are deliberately not asserted here: a negative control that
    breaks them must run and have its violations reported.
    """
    mdp.check_structure()
    demo_policy = np.asarray(demo_policy, dtype=np.int64)
    support_states = sorted({s for s, _ in mdp.demo_support})
    support_state_set = set(support_states)
    support_pairs = set(mdp.demo_support)
    for s in support_states:
        a = int(demo_policy[s])
        if (s, a) not in support_pairs:
            raise PreconditionError(f"demo policy takes a non-demonstrated action {a} at state {s}")
        nxt = int(mdp.transition[s, a])
        if nxt not in support_state_set:
            raise PreconditionError(f"demo policy exits the support at state {s} (reaches {nxt})")

    q_pi = evaluate_policy(mdp, policy).q
    q_demo = evaluate_policy(mdp, demo_policy).q
    bound = min(float(q_demo[s, a]) for s, a in mdp.demo_support)

    violations = []
    tol = 1e-9
    for s in range(mdp.n_states):
        if s in support_state_set:
            continue
        for a in range(mdp.n_actions):
            lhs = float(q_pi[s, a])
            if lhs > bound + tol:
                violations.append({"state": s, "action": a, "q": lhs, "bound": bound})
    return violations


def violations_to_json(violations: list[dict]) -> str:
    return json.dumps(violations)


def brute_force_retrieve(states: np.ndarray, query: np.ndarray) -> int:
    """Exhaustive cosine-similarity scan; argmax, lowest index on ties.

    Zero-norm rows or a zero-norm query score -1 (picked only if everything
    does, in which case index 0 wins).
    """
    states = np.asarray(states, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    if states.ndim != 2 or states.shape[0] == 0:
        raise PreconditionError("state matrix must be non-empty and 2-D")
    qn = math.sqrt(float(sum(x * x for x in query)))
    best_i, best_sim = 0, -float("inf")
    for i in range(states.shape[0]):
        row = states[i]
        rn = math.sqrt(float(sum(x * x for x in row)))
        if qn == 0.0 or rn == 0.0:
            sim = -1.0
        else:
            sim = float(sum(a * b for a, b in zip(row, query))) / (rn * qn)
        if sim > best_sim:
            best_i, best_sim = i, sim
    return best_i


def finite_diff_grad(
    fn: Callable[[np.ndarray], float], params: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central finite differences of a scalar function, one coordinate at a time."""
    if h <= 0:
        raise PreconditionError("step size must be positive")
    params = np.asarray(params, dtype=np.float64)
    flat = params.ravel()
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn(params)
        flat[i] = orig - h
        down = fn(params)
        flat[i] = orig
        grad[i] = (up - down) / (2.0 * h)
    return grad.reshape(params.shape)


def grad_mismatches(
    analytic: np.ndarray,
    numeric: np.ndarray,
    rel_tol: float = 1e-4,
    small: float = 1e-8,
) -> list[tuple[int, float, float]]:
    """Elements failing the relative-error check, exempting dual-small magnitudes."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.shape != n.shape:
        raise PreconditionError("gradient shapes differ")
    bad = []
    for i in range(a.size):
        if abs(a[i]) < small and abs(n[i]) < small:
            continue
        denom = max(abs(a[i]), abs(n[i]))
        if abs(a[i] - n[i]) / denom > rel_tol:
            bad.append((i, float(a[i]), float(n[i])))
    return bad


def random_theorem_instance(rng: np.random.Generator) -> tuple[TabularMDP, np.ndarray, np.ndarray]:
    """Random tabular instance on which the demonstration bound provably holds.

    Construction: a demonstrated cycle of safe states with a constant task
    reward c on every safe-state pair (the demonstrated pairs achieve the best
    available reward rate), safety penalties <= 0 everywhere, and arbitrary
    transitions elsewhere. The demo policy follows the cycle, so its closure
    stays inside the support.
    """
    n_states = int(rng.integers(5, 12))
    n_actions = int(rng.integers(2, 5))
    horizon = int(rng.integers(3, 9))
    gamma = float(rng.uniform(0.5, 0.99))
    c = float(rng.uniform(0.5, 2.0))

    n_supp = int(rng.integers(2, max(3, n_states // 2 + 1)))
    supp_states = [int(s) for s in rng.choice(n_states, size=n_supp, replace=False)]

    transition = rng.integers(0, n_states, size=(n_states, n_actions))
    task_reward = rng.uniform(0.0, c, size=(n_states, n_actions))
    safety_penalty = -rng.uniform(0.0, 1.0, size=n_states)
    safe = np.zeros(n_states, dtype=bool)
    safe[supp_states] = True
    # some safe states may exist outside the support too
    for s in range(n_states):
        if s not in supp_states and rng.random() < 0.3:
            safe[s] = True

    demo_policy = rng.integers(0, n_actions, size=n_states)
    support_pairs = []
    for idx, s in enumerate(supp_states):
        a = int(rng.integers(0, n_actions))
        nxt = supp_states[(idx + 1) % n_supp]
        transition[s, a] = nxt
        demo_policy[s] = a
        support_pairs.append((s, a))
    # demonstrated pairs run at the maximum available reward rate
    for s, a in support_pairs:
        task_reward[s, a] = c

    mdp = TabularMDP(
        n_states=n_states,
        n_actions=n_actions,
        transition=transition,
        task_reward=task_reward,
        safe=safe,
        safety_penalty=safety_penalty,
        demo_support=support_pairs,
        horizon=horizon,
        gamma=gamma,
    )
    policy = rng.integers(0, n_actions, size=n_states)
    return mdp, policy, demo_policy
