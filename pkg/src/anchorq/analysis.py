"""Evaluation protocol and reward/cost trade-off analysis.

Evaluation runs deterministic-action rollouts: per seed, the mean episodic
reward and cost over the requested episodes; the reported mean and std are
taken across the per-seed means (population std). The trade-off analysis
compares a candidate against an unconstrained baseline by percentage cost
reduction per percentage reward reduction, in a standard form (means) and a
robust form (mean +/- one std pessimistic bounds).
"""

from __future__ import annotations

import csv
import json
import io
from dataclasses import dataclass

import numpy as np

from .agent import Actor, sample_action


class StatsFormatError(ValueError):
    """Malformed statistics CSV; message carries the row number."""


@dataclass
class RunStats:
    algo: str
    reward_mean: float
    reward_std: float
    cost_mean: float
    cost_std: float
    episodes: int
    seeds: int

    def __post_init__(self):
        if self.reward_std < 0 or self.cost_std < 0:
            raise ValueError("standard deviations must be non-negative")
        if self.episodes < 1 or self.seeds < 1:
            raise ValueError("episodes and seeds must be positive")

    @property
    def pess_reward(self) -> float:
        return self.reward_mean - self.reward_std

    @property
    def pess_cost(self) -> float:
        return self.cost_mean + self.cost_std


@dataclass
class TradeoffRow:
    algo: str
    cost_mean: float
    delta_c: float
    delta_r: float
    rho: float | None
    status: str  # "ok" | "unsafe" | "undefined" | "baseline-degenerate"
    robust: bool = False

    @property
    def rho_text(self) -> str:
        if self.status == "unsafe":
            return "N/A (Unsafe)"
        if self.status == "undefined":
            return "N/A (Undefined)"
        if self.status == "baseline-degenerate":
            return "N/A (Degenerate)"
        return f"{self.rho:.2f}"


def _tradeoff(algo: str, cost_mean: float, c_a: float, r_a: float, c_b: float, r_b: float,
              robust: bool) -> TradeoffRow:
    if c_b == 0.0 or r_b == 0.0:
        return TradeoffRow(algo, cost_mean, float("nan"), float("nan"), None, "baseline-degenerate", robust)
    delta_c = (c_b - c_a) / c_b * 100.0
    delta_r = (r_b - r_a) / r_b * 100.0
    if delta_c < 0.0:
        return TradeoffRow(algo, cost_mean, delta_c, delta_r, None, "unsafe", robust)
    if delta_r == 0.0:
        return TradeoffRow(algo, cost_mean, delta_c, delta_r, None, "undefined", robust)
    return TradeoffRow(algo, cost_mean, delta_c, delta_r, delta_c / delta_r, "ok", robust)


def standard_tradeoff(candidate: RunStats, baseline: RunStats) -> TradeoffRow:
    """Percentage drops computed from the means alone."""
    return _tradeoff(candidate.algo, candidate.cost_mean,
                     candidate.cost_mean, candidate.reward_mean,
                     baseline.cost_mean, baseline.reward_mean, robust=False)


def robust_tradeoff(candidate: RunStats, baseline: RunStats) -> TradeoffRow:
    """Percentage drops computed from the pessimistic bounds (mean +/- std)."""
    return _tradeoff(candidate.algo, candidate.cost_mean,
                     candidate.pess_cost, candidate.pess_reward,
                     baseline.pess_cost, baseline.pess_reward, robust=True)


def select_best(rows: list[TradeoffRow], baseline: RunStats) -> str:
    """Pick the winner: max trade-off ratio among valid rows, or the minimum-cost
    candidate when every candidate costs more than the baseline."""
    if not rows:
        raise ValueError("no candidate rows")
    if all(r.cost_mean > baseline.cost_mean for r in rows):
        return min(rows, key=lambda r: r.cost_mean).algo
    valid = [r for r in rows if r.status == "ok"]
    if not valid:
        return min(rows, key=lambda r: r.cost_mean).algo
    return max(valid, key=lambda r: r.rho).algo


def evaluate_actor(
    actor: Actor,
    env_factory,
    episodes: int,
    seeds: int,
    algo: str = "agent",
    base_seed: int = 10_000,
    record: bool = False,
    pooled: bool = False,
) -> tuple[RunStats, dict]:
    """Deterministic rollouts; mean/std over the per-seed episode means.

    With record=True the detail dict carries every action sequence so an
    independent replay can recompute the sums.
    """
    if episodes < 1 or seeds < 1:
        raise ValueError("episodes and seeds must be >= 1")
    per_seed_reward, per_seed_cost = [], []
    detail = {"per_episode": [], "actions": [], "reset_seeds": []}
    for k in range(seeds):
        env = env_factory()
        ep_rewards, ep_costs = [], []
        for ep in range(episodes):
            reset_seed = base_seed + 1000 * k + ep
            state = env.reset(seed=reset_seed)
            total_r = total_c = 0.0
            acts = []
            while True:
                action, _ = sample_action(actor, state, deterministic=True)
                if record:
                    acts.append(action.copy())
                res = env.step(action)
                total_r += res.task_reward
                total_c += res.cost
                state = res.next_state
                if res.done:
                    break
            ep_rewards.append(total_r)
            ep_costs.append(total_c)
            if record:
                detail["actions"].append(acts)
                detail["reset_seeds"].append(reset_seed)
        detail["per_episode"].append(list(zip(ep_rewards, ep_costs)))
        per_seed_reward.append(float(np.mean(ep_rewards)))
        per_seed_cost.append(float(np.mean(ep_costs)))
    detail["per_seed_reward"] = per_seed_reward
    detail["per_seed_cost"] = per_seed_cost
    if pooled:
        all_r = [r for seed_eps in detail["per_episode"] for r, _ in seed_eps]
        all_c = [c for seed_eps in detail["per_episode"] for _, c in seed_eps]
        stats = RunStats(algo, float(np.mean(all_r)), float(np.std(all_r)),
                         float(np.mean(all_c)), float(np.std(all_c)), episodes, seeds)
    else:
        stats = RunStats(algo, float(np.mean(per_seed_reward)), float(np.std(per_seed_reward)),
                         float(np.mean(per_seed_cost)), float(np.std(per_seed_cost)), episodes, seeds)
    return stats, detail


STATS_COLUMNS = ("algo", "reward_mean", "reward_std", "cost_mean", "cost_std", "episodes", "seeds")


def stats_to_csv(rows: list[RunStats]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STATS_COLUMNS)
    for r in rows:
        w.writerow([r.algo, repr(r.reward_mean), repr(r.reward_std),
                    repr(r.cost_mean), repr(r.cost_std), r.episodes, r.seeds])
    return buf.getvalue()


def stats_from_csv(text: str) -> list[RunStats]:
    rows = []
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != STATS_COLUMNS:
        raise StatsFormatError(f"row 1: header must be {','.join(STATS_COLUMNS)}")
    for row_no, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(STATS_COLUMNS):
            raise StatsFormatError(f"row {row_no}: expected {len(STATS_COLUMNS)} columns, got {len(row)}")
        try:
            rows.append(RunStats(row[0], float(row[1]), float(row[2]), float(row[3]),
                                 float(row[4]), int(row[5]), int(row[6])))
        except ValueError as exc:
            raise StatsFormatError(f"row {row_no}: {exc}") from exc
    return rows


def stats_to_json(rows: list[RunStats]) -> str:
    return json.dumps([r.__dict__ for r in rows])


def stats_from_json(text: str) -> list[RunStats]:
    try:
        return [RunStats(**obj) for obj in json.loads(text)]
    except (TypeError, json.JSONDecodeError) as exc:
        raise StatsFormatError(str(exc)) from exc


def tradeoff_table(candidates: list[RunStats], baseline: RunStats, robust: bool = False) -> list[TradeoffRow]:
    fn = robust_tradeoff if robust else standard_tradeoff
    return [fn(c, baseline) for c in candidates]


def tradeoff_table_text(rows: list[TradeoffRow], baseline: RunStats, winner: str | None = None) -> str:
    kind = "robust" if rows and rows[0].robust else "standard"
    ref_c = baseline.pess_cost if kind == "robust" else baseline.cost_mean
    ref_r = baseline.pess_reward if kind == "robust" else baseline.reward_mean
    out = [f"{kind} trade-off vs {baseline.algo} (reward {ref_r:.2f}, cost {ref_c:.2f})"]
    out.append(f"{'algo':<12} {'cost drop %':>12} {'reward drop %':>14} {'ratio':>14}")
    for r in rows:
        mark = " *" if winner is not None and r.algo == winner else ""
        if r.status == "baseline-degenerate":
            out.append(f"{r.algo:<12} {'N/A':>12} {'N/A':>14} {r.rho_text:>14}{mark}")
        else:
            out.append(f"{r.algo:<12} {r.delta_c:>12.1f} {r.delta_r:>14.1f} {r.rho_text:>14}{mark}")
    return "\n".join(out) + "\n"


def tradeoff_table_csv(rows: list[TradeoffRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["algo", "cost_drop_pct", "reward_drop_pct", "ratio", "status"])
    for r in rows:
        w.writerow([r.algo,
                    "" if np.isnan(r.delta_c) else f"{r.delta_c:.1f}",
                    "" if np.isnan(r.delta_r) else f"{r.delta_r:.1f}",
                    "" if r.rho is None else f"{r.rho:.2f}",
                    r.status])
    return buf.getvalue()
