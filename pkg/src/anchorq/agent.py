"""Actor-critic learner: squashed-Gaussian actor, twin critics with targets,
auto-tuned entropy, and the demonstration-anchored critic objective.

Critic objective per critic j, over N rollout rows and N demonstration rows
(all targets use the target critics and are held constant):

  constraint: (1-w) * (max(Q_j(s,a), qhat) - qhat)^2,
              qhat = r* + gamma * min_i target_i(s'*, a'*) from the anchor
  off-dist:   (1-w) * (Q_j(s,a) - [r_safe(s) + gamma * min_i target_i(s', a'~pi)])^2
  backbone:   w * (Q_j(s,a) - [r + gamma * (min_i target_i(s', a'~pi) - alpha*logpi)])^2
  demo bias:  (Q_j(s_D,a_D) - [r_D + gamma * min_i target_i(s'_D, a'_D stored)])^2

summed and scaled by 1/(2N), with w the discriminator gate at s. Entropy
appears only in the backbone term. Three baseline modes share the machinery:
"anchorq" (full objective), "sac" (backbone only, environment reward), and
"sac_gail" (backbone only, reward = log disc(s, a)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import buffers
from .buffers import Anchor, DemoSet, ReplayBuffer, Transition
from .discriminator import Discriminator, gate, safety_reward, update_discriminator
from .nets import AdamState, DenseNet, ShapeError, adam_step, soft_update

TANH_EPS = 1e-6
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

VARIANTS = ("original", "no_cosine", "no_max", "no_constraint", "no_ood", "no_demo", "no_sac")
ALGOS = ("anchorq", "sac", "sac_gail")


@dataclass
class LossSwitches:
    cosine: bool = True
    use_max: bool = True
    constraint: bool = True
    ood: bool = True
    demo: bool = True
    sac: bool = True

    @classmethod
    def for_variant(cls, variant: str) -> "LossSwitches":
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        sw = cls()
        if variant == "no_cosine":
            sw.cosine = False
        elif variant == "no_max":
            sw.use_max = False
        elif variant == "no_constraint":
            sw.constraint = False
        elif variant == "no_ood":
            sw.ood = False
        elif variant == "no_demo":
            sw.demo = False
        elif variant == "no_sac":
            sw.sac = False
        return sw


@dataclass
class Actor:
    net: DenseNet
    adam: AdamState
    action_low: np.ndarray
    action_high: np.ndarray
    log_std_min: float = -20.0
    log_std_max: float = 2.0

    @classmethod
    def create(
        cls,
        state_dim: int,
        action_low: np.ndarray,
        action_high: np.ndarray,
        rng: np.random.Generator,
        hidden: tuple[int, ...] = (32, 32),
        learning_rate: float = 3e-4,
        log_std_init: float = -3.0,
    ) -> "Actor":
        action_dim = len(action_low)
        net = DenseNet.create([state_dim, *hidden, 2 * action_dim], rng, "relu", "identity")
        net.biases[-1][action_dim:] = log_std_init
        return cls(
            net=net,
            adam=AdamState.for_params(net.params(), learning_rate),
            action_low=np.asarray(action_low, dtype=np.float64),
            action_high=np.asarray(action_high, dtype=np.float64),
        )

    @property
    def action_dim(self) -> int:
        return len(self.action_low)

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * (self.action_low + self.action_high)

    @property
    def half(self) -> np.ndarray:
        return 0.5 * (self.action_high - self.action_low)


@dataclass
class PolicySample:
    actions: np.ndarray
    log_probs: np.ndarray
    # pieces reused by the analytic policy gradient
    trace: object
    noise: np.ndarray
    sigma: np.ndarray
    tanh_u: np.ndarray
    clip_mask: np.ndarray


def _policy_forward(actor: Actor, states: np.ndarray):
    out, trace = actor.net.forward_trace(states)
    a_dim = actor.action_dim
    mu = out[:, :a_dim]
    ls_raw = out[:, a_dim:]
    ls = np.clip(ls_raw, actor.log_std_min, actor.log_std_max)
    clip_mask = ((ls_raw > actor.log_std_min) & (ls_raw < actor.log_std_max)).astype(np.float64)
    return mu, ls, clip_mask, trace


def sample_actions(actor: Actor, states: np.ndarray, noise: np.ndarray) -> PolicySample:
    """Reparameterized batch sample: a = mid + half * tanh(mu + sigma * z)."""
    mu, ls, clip_mask, trace = _policy_forward(actor, states)
    sigma = np.exp(ls)
    u = mu + sigma * noise
    t = np.tanh(u)
    actions = actor.mid + actor.half * t
    jac = actor.half * (1.0 - t * t) + TANH_EPS
    log_probs = np.sum(-0.5 * noise * noise - ls - HALF_LOG_2PI - np.log(jac), axis=1)
    return PolicySample(actions, log_probs, trace, noise, sigma, t, clip_mask)


def sample_action(
    actor: Actor,
    state: np.ndarray,
    rng: np.random.Generator | None = None,
    deterministic: bool = False,
) -> tuple[np.ndarray, float | None]:
    """Single-state action. Deterministic mode squashes the mean and omits log_prob."""
    states = np.asarray(state, dtype=np.float64)[None, :]
    if deterministic:
        mu, _, _, _ = _policy_forward(actor, states)
        return actor.mid + actor.half * np.tanh(mu[0]), None
    if rng is None:
        raise ValueError("stochastic sampling needs an rng")
    noise = rng.standard_normal((1, actor.action_dim))
    ps = sample_actions(actor, states, noise)
    return ps.actions[0], float(ps.log_probs[0])


def action_log_prob(actor: Actor, state: np.ndarray, action: np.ndarray) -> float:
    """Density of an arbitrary in-bounds action under the squashed Gaussian."""
    states = np.asarray(state, dtype=np.float64)[None, :]
    mu, ls, _, _ = _policy_forward(actor, states)
    sigma = np.exp(ls[0])
    t = np.clip((np.asarray(action) - actor.mid) / actor.half, -1.0 + 1e-15, 1.0 - 1e-15)
    u = np.arctanh(t)
    z = (u - mu[0]) / sigma
    jac = actor.half * (1.0 - t * t) + TANH_EPS
    return float(np.sum(-0.5 * z * z - ls[0] - HALF_LOG_2PI - np.log(jac)))


@dataclass
class CriticPair:
    q1: DenseNet
    q2: DenseNet
    target_q1: DenseNet
    target_q2: DenseNet
    adam1: AdamState
    adam2: AdamState

    @classmethod
    def create(
        cls,
        state_dim: int,
        action_dim: int,
        rng: np.random.Generator,
        hidden: tuple[int, ...] = (32, 32),
        learning_rate: float = 3e-4,
    ) -> "CriticPair":
        sizes = [state_dim + action_dim, *hidden, 1]
        q1 = DenseNet.create(sizes, rng, "relu", "identity")
        q2 = DenseNet.create(sizes, rng, "relu", "identity")
        return cls(
            q1=q1,
            q2=q2,
            target_q1=q1.clone(),
            target_q2=q2.clone(),
            adam1=AdamState.for_params(q1.params(), learning_rate),
            adam2=AdamState.for_params(q2.params(), learning_rate),
        )

    def target_min(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        sa = np.concatenate([states, actions], axis=1)
        return np.minimum(self.target_q1.forward(sa)[:, 0], self.target_q2.forward(sa)[:, 0])

    def soft_update_targets(self, rate: float) -> None:
        soft_update(self.target_q1.params(), self.q1.params(), rate)
        soft_update(self.target_q2.params(), self.q2.params(), rate)


@dataclass
class EntropyTuner:
    log_alpha: np.ndarray  # shape-() array so Adam can update it in place
    target_entropy: float
    adam: AdamState

    @classmethod
    def create(cls, action_dim: int, alpha0: float = 1.0, learning_rate: float = 3e-4,
               target_entropy: float | None = None) -> "EntropyTuner":
        la = np.array(math.log(alpha0))
        h_bar = -float(action_dim) if target_entropy is None else target_entropy
        return cls(log_alpha=la, target_entropy=h_bar, adam=AdamState.for_params([la], learning_rate))

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha))


def q_min_anchor(critics: CriticPair, anchor: Anchor, gamma: float) -> float:
    """Local bound target: anchor reward plus discounted min target value of its successor."""
    nxt = critics.target_min(anchor.next_state[None, :], anchor.next_action[None, :])
    return float(anchor.task_reward + gamma * nxt[0])


def stack_anchors(anchors: list[Anchor]) -> dict[str, np.ndarray]:
    return {
        "state": np.stack([a.state for a in anchors]),
        "reward": np.array([a.task_reward for a in anchors]),
        "next_state": np.stack([a.next_state for a in anchors]),
        "next_action": np.stack([a.next_action for a in anchors]),
    }


@dataclass
class CriticLossResult:
    loss: float
    grads_q1: list[np.ndarray]
    grads_q2: list[np.ndarray]
    parts: dict[str, float]


def critic_loss(
    critics: CriticPair,
    batch_b: dict[str, np.ndarray],
    batch_d: dict[str, np.ndarray],
    anchors: dict[str, np.ndarray],
    next_actions_b: np.ndarray,
    next_log_probs_b: np.ndarray,
    safety_rewards_b: np.ndarray,
    gates_b: np.ndarray,
    alpha: float,
    gamma: float,
    switches: LossSwitches,
) -> CriticLossResult:
    """Full anchored objective; returns the loss, per-critic gradients, and term diagnostics."""
    n = batch_b["state"].shape[0]
    if batch_d["state"].shape[0] != n:
        raise ShapeError("rollout and demonstration batch sizes must match")
    if anchors["reward"].shape[0] != n:
        raise ShapeError("anchors must align with the rollout batch")

    sa_b = np.concatenate([batch_b["state"], batch_b["action"]], axis=1)
    sa_d = np.concatenate([batch_d["state"], batch_d["action"]], axis=1)
    live_b = 1.0 - batch_b["done"]

    next_min_b = critics.target_min(batch_b["next_state"], next_actions_b)
    next_min_d = critics.target_min(batch_d["next_state"], batch_d["next_action"])
    qhat = anchors["reward"] + gamma * critics.target_min(anchors["next_state"], anchors["next_action"])

    y_sac = batch_b["reward"] + gamma * live_b * (next_min_b - alpha * next_log_probs_b)
    y_ood = safety_rewards_b + gamma * live_b * next_min_b
    y_demo = batch_d["reward"] + gamma * batch_d["bootstrap"] * next_min_d

    w = gates_b
    scale = 1.0 / (2.0 * n)
    zeros = np.zeros(n)

    grads_per_critic = []
    loss_total = 0.0
    part_sums = {"constraint": 0.0, "ood": 0.0, "sac": 0.0, "demo": 0.0}
    for net, _ in ((critics.q1, 1), (critics.q2, 2)):
        qb_out, tr_b = net.forward_trace(sa_b)
        qd_out, tr_d = net.forward_trace(sa_d)
        qb = qb_out[:, 0]
        qd = qd_out[:, 0]

        if switches.constraint:
            resid = qb - qhat
            if switches.use_max:
                resid = np.maximum(resid, 0.0)
            lc_loss = (1.0 - w) * resid * resid
            lc_coef = (1.0 - w) * 2.0 * resid
        else:
            lc_loss, lc_coef = zeros, zeros
        if switches.ood:
            resid = qb - y_ood
            ood_loss = (1.0 - w) * resid * resid
            ood_coef = (1.0 - w) * 2.0 * resid
        else:
            ood_loss, ood_coef = zeros, zeros
        if switches.sac:
            resid = qb - y_sac
            sac_loss = w * resid * resid
            sac_coef = w * 2.0 * resid
        else:
            sac_loss, sac_coef = zeros, zeros
        if switches.demo:
            resid = qd - y_demo
            demo_loss = resid * resid
            demo_coef = 2.0 * resid
        else:
            demo_loss, demo_coef = zeros, zeros

        coef_b = (lc_coef + ood_coef + sac_coef) * scale
        coef_d = demo_coef * scale
        g_b, _ = net.backward(tr_b, coef_b[:, None])
        g_d, _ = net.backward(tr_d, coef_d[:, None])
        grads_per_critic.append([a + b for a, b in zip(g_b, g_d)])

        part_sums["constraint"] += float(np.sum(lc_loss)) * scale
        part_sums["ood"] += float(np.sum(ood_loss)) * scale
        part_sums["sac"] += float(np.sum(sac_loss)) * scale
        part_sums["demo"] += float(np.sum(demo_loss)) * scale
        critic_total = (float(np.sum(lc_loss)) + float(np.sum(ood_loss))
                        + float(np.sum(sac_loss)) + float(np.sum(demo_loss))) * scale
        part_sums[f"loss_q{len(grads_per_critic)}"] = critic_total
        loss_total += critic_total

    parts = {k: (v / 2.0 if k in ("constraint", "ood", "sac", "demo") else v)
             for k, v in part_sums.items()}
    return CriticLossResult(loss_total / 2.0, grads_per_critic[0], grads_per_critic[1], parts)


def backbone_critic_loss(
    critics: CriticPair,
    batch: dict[str, np.ndarray],
    rewards: np.ndarray,
    next_actions: np.ndarray,
    next_log_probs: np.ndarray,
    alpha: float,
    gamma: float,
) -> CriticLossResult:
    """Plain twin-critic TD loss (mean squared error per critic) for the baseline modes."""
    n = batch["state"].shape[0]
    sa = np.concatenate([batch["state"], batch["action"]], axis=1)
    live = 1.0 - batch["done"]
    next_min = critics.target_min(batch["next_state"], next_actions)
    y = rewards + gamma * live * (next_min - alpha * next_log_probs)

    grads_per_critic = []
    loss_total = 0.0
    for net in (critics.q1, critics.q2):
        q_out, tr = net.forward_trace(sa)
        resid = q_out[:, 0] - y
        loss_total += float(np.mean(resid * resid))
        g, _ = net.backward(tr, (2.0 * resid / n)[:, None])
        grads_per_critic.append(g)
    parts = {"constraint": 0.0, "ood": 0.0, "sac": loss_total / 2.0, "demo": 0.0}
    return CriticLossResult(loss_total / 2.0, grads_per_critic[0], grads_per_critic[1], parts)


def policy_objective_and_grads(
    actor: Actor,
    critics: CriticPair,
    alpha: float,
    states: np.ndarray,
    noise: np.ndarray,
) -> tuple[float, list[np.ndarray], np.ndarray]:
    """Soft objective J = mean(min_i target_i(s, a) - alpha * log pi) and its actor gradient."""
    n = states.shape[0]
    ps = sample_actions(actor, states, noise)
    sa = np.concatenate([states, ps.actions], axis=1)
    q1_out, tr1 = critics.target_q1.forward_trace(sa)
    q2_out, tr2 = critics.target_q2.forward_trace(sa)
    q1v, q2v = q1_out[:, 0], q2_out[:, 0]
    qmin = np.minimum(q1v, q2v)
    objective = float(np.mean(qmin - alpha * ps.log_probs))

    pick1 = (q1v <= q2v).astype(np.float64)
    _, dx1 = critics.target_q1.backward(tr1, (pick1 / n)[:, None])
    _, dx2 = critics.target_q2.backward(tr2, ((1.0 - pick1) / n)[:, None])
    s_dim = states.shape[1]
    dj_da = dx1[:, s_dim:] + dx2[:, s_dim:]

    t = ps.tanh_u
    one_m_t2 = 1.0 - t * t
    jac = actor.half * one_m_t2 + TANH_EPS
    dlogp_du = 2.0 * actor.half * t * one_m_t2 / jac
    dj_dlogp = -alpha / n
    dj_du = dj_da * (actor.half * one_m_t2) + dj_dlogp * dlogp_du
    dj_dmu = dj_du
    dj_dls = dj_du * ps.sigma * ps.noise + dj_dlogp * (-1.0)
    dj_dls_raw = dj_dls * ps.clip_mask
    dout = np.concatenate([dj_dmu, dj_dls_raw], axis=1)
    actor_grads, _ = actor.net.backward(ps.trace, dout)
    return objective, actor_grads, ps.log_probs


def policy_update(
    actor: Actor, critics: CriticPair, tuner: EntropyTuner, states: np.ndarray, rng: np.random.Generator
) -> tuple[float, np.ndarray]:
    """One ascent step on the soft objective; returns (pre-step objective, log_probs)."""
    if states.shape[0] == 0:
        raise ShapeError("policy update needs a non-empty batch")
    noise = rng.standard_normal((states.shape[0], actor.action_dim))
    objective, grads, log_probs = policy_objective_and_grads(actor, critics, tuner.alpha, states, noise)
    adam_step(actor.net.params(), [-g for g in grads], actor.adam)
    return objective, log_probs


def alpha_update(tuner: EntropyTuner, log_probs: np.ndarray) -> float:
    """Entropy-coefficient loss mean(-alpha * (log pi + target)); one Adam step on log alpha."""
    alpha = tuner.alpha
    err = float(np.mean(log_probs + tuner.target_entropy))
    loss = -alpha * err
    grad_log_alpha = np.array(-alpha * err)  # chain rule through alpha = exp(log_alpha)
    adam_step([tuner.log_alpha], [grad_log_alpha], tuner.adam)
    return loss


DIAG_KEYS = (
    "critic_loss", "constraint_loss", "ood_loss", "sac_loss", "demo_loss",
    "disc_loss", "policy_objective", "alpha_loss", "alpha", "gate_mean",
    "anchor_dist_mean", "anchor_dist_max",
)


@dataclass
class TrainerConfig:
    """Learner-facing hyperparameters (a thin slice of the full run config)."""

    algo: str = "anchorq"
    variant: str = "original"
    gamma: float = 0.99
    lr: float = 3e-4
    alpha_lr: float = 3e-4
    disc_lr: float = 3e-4
    batch_size: int = 64
    eta: float = 0.005
    alpha0: float = 1.0
    target_entropy: float | None = None
    warmup_steps: int = 1000
    buffer_capacity: int = 10**6
    lambda_gp: float = 0.005
    hidden: tuple[int, ...] = (32, 32)
    disc_hidden: tuple[int, ...] = (32, 32)
    log_std_init: float = -3.0
    gate_threshold: bool = False
    anchor_normalize: bool = False


class Trainer:
    """One training session: owns the env, buffers, networks, and rng streams."""

    def __init__(self, cfg: TrainerConfig, env, demos: DemoSet | None, seed: int = 0):
        if cfg.algo not in ALGOS:
            raise ValueError(f"unknown algo {cfg.algo!r}")
        if cfg.algo != "sac" and (demos is None or len(demos) == 0):
            raise ValueError(f"algo {cfg.algo!r} requires a non-empty demonstration set")
        self.cfg = cfg
        self.env = env
        self.demos = demos
        self.switches = LossSwitches.for_variant(cfg.variant)

        ss = np.random.SeedSequence(seed)
        (s_init, s_env, s_warmup, s_act, s_batch_b, s_batch_d, s_disc, s_anchor, s_policy) = ss.spawn(9)
        init_rng = np.random.default_rng(s_init)
        self.rng_env = np.random.default_rng(s_env)
        self.rng_warmup = np.random.default_rng(s_warmup)
        self.rng_act = np.random.default_rng(s_act)
        self.rng_batch_b = np.random.default_rng(s_batch_b)
        self.rng_batch_d = np.random.default_rng(s_batch_d)
        self.rng_disc = np.random.default_rng(s_disc)
        self.rng_anchor = np.random.default_rng(s_anchor)
        self.rng_policy = np.random.default_rng(s_policy)

        self.actor = Actor.create(
            env.state_dim, env.action_low, env.action_high, init_rng,
            hidden=cfg.hidden, learning_rate=cfg.lr, log_std_init=cfg.log_std_init,
        )
        self.critics = CriticPair.create(env.state_dim, env.action_dim, init_rng,
                                         hidden=cfg.hidden, learning_rate=cfg.lr)
        self.tuner = EntropyTuner.create(env.action_dim, cfg.alpha0, cfg.alpha_lr, cfg.target_entropy)
        self.disc: Discriminator | None = None
        if cfg.algo == "anchorq":
            self.disc = Discriminator.create(env.state_dim, init_rng, cfg.disc_hidden, cfg.disc_lr, cfg.lambda_gp)
        elif cfg.algo == "sac_gail":
            self.disc = Discriminator.create(env.state_dim + env.action_dim, init_rng,
                                             cfg.disc_hidden, cfg.disc_lr, cfg.lambda_gp)

        self.buffer = ReplayBuffer(cfg.buffer_capacity, env.state_dim, env.action_dim)
        self.state = env.reset(seed=int(self.rng_env.integers(2**31)))
        self.step_count = 0
        self.episode_reward = 0.0
        self.episode_cost = 0.0
        self.last_episode: tuple[float, float] | None = None

    def gates(self, states: np.ndarray) -> np.ndarray:
        w = gate(self.disc, states)
        if self.cfg.gate_threshold:
            w = (w >= 0.5).astype(np.float64)
        return w

    def _env_step(self) -> None:
        if self.step_count < self.cfg.warmup_steps:
            action = self.rng_warmup.uniform(self.env.action_low, self.env.action_high)
        else:
            action, _ = sample_action(self.actor, self.state, self.rng_act)
        res = self.env.step(action)
        self.buffer.push(Transition(
            state=self.state, action=np.asarray(action, dtype=np.float64),
            task_reward=res.task_reward, cost=res.cost,
            next_state=res.next_state, next_action=None, done=res.done,
        ))
        self.episode_reward += res.task_reward
        self.episode_cost += res.cost
        if res.done:
            self.last_episode = (self.episode_reward, self.episode_cost)
            self.episode_reward = 0.0
            self.episode_cost = 0.0
            self.state = self.env.reset(seed=int(self.rng_env.integers(2**31)))
        else:
            self.state = res.next_state
        self.step_count += 1

    def _pick_anchors(self, states: np.ndarray) -> dict[str, np.ndarray]:
        if not self.switches.cosine:
            idx = self.rng_anchor.integers(0, len(self.demos), size=states.shape[0])
        elif self.cfg.anchor_normalize:
            idx = buffers.retrieve_anchor_indices(
                self.demos.standardized_view(), self.demos.standardize_queries(states))
        else:
            idx = buffers.retrieve_anchor_indices(self.demos, states)
        return self.demos.anchor_arrays(idx)

    def _update_anchorq(self, diags: dict) -> None:
        n = self.cfg.batch_size
        batch_b = self.buffer.sample(n, self.rng_batch_b)
        batch_d = self.demos.sample(n, self.rng_batch_d)
        anchor_arrays = self._pick_anchors(batch_b["state"])
        next_ps = sample_actions(
            self.actor, batch_b["next_state"], self.rng_act.standard_normal((n, self.actor.action_dim))
        )
        diags["disc_loss"] = update_discriminator(self.disc, batch_b["state"], batch_d["state"], self.rng_disc)
        gates_b = self.gates(batch_b["state"])
        rs_b = safety_reward(self.disc, batch_b["state"])
        res = critic_loss(
            self.critics, batch_b, batch_d, anchor_arrays,
            next_ps.actions, next_ps.log_probs, rs_b, gates_b,
            self.tuner.alpha, self.cfg.gamma, self.switches,
        )
        adam_step(self.critics.q1.params(), res.grads_q1, self.critics.adam1)
        adam_step(self.critics.q2.params(), res.grads_q2, self.critics.adam2)
        objective, log_probs = policy_update(self.actor, self.critics, self.tuner, batch_b["state"], self.rng_policy)
        diags["alpha_loss"] = alpha_update(self.tuner, log_probs)
        self.critics.soft_update_targets(self.cfg.eta)

        dist = np.linalg.norm(batch_b["state"] - anchor_arrays["state"], axis=1)
        diags.update(
            critic_loss=res.loss, constraint_loss=res.parts["constraint"], ood_loss=res.parts["ood"],
            sac_loss=res.parts["sac"], demo_loss=res.parts["demo"], policy_objective=objective,
            alpha=self.tuner.alpha, gate_mean=float(np.mean(gates_b)),
            anchor_dist_mean=float(np.mean(dist)), anchor_dist_max=float(np.max(dist)),
        )

    def _update_backbone(self, diags: dict) -> None:
        n = self.cfg.batch_size
        batch = self.buffer.sample(n, self.rng_batch_b)
        next_ps = sample_actions(
            self.actor, batch["next_state"], self.rng_act.standard_normal((n, self.actor.action_dim))
        )
        if self.cfg.algo == "sac_gail":
            batch_d = self.demos.sample(n, self.rng_batch_d)
            sa_b = np.concatenate([batch["state"], batch["action"]], axis=1)
            sa_d = np.concatenate([batch_d["state"], batch_d["action"]], axis=1)
            diags["disc_loss"] = update_discriminator(self.disc, sa_b, sa_d, self.rng_disc)
            rewards = safety_reward(self.disc, sa_b)
            diags["gate_mean"] = float(np.mean(gate(self.disc, sa_b)))
        else:
            rewards = batch["reward"]
        res = backbone_critic_loss(
            self.critics, batch, rewards, next_ps.actions, next_ps.log_probs,
            self.tuner.alpha, self.cfg.gamma,
        )
        adam_step(self.critics.q1.params(), res.grads_q1, self.critics.adam1)
        adam_step(self.critics.q2.params(), res.grads_q2, self.critics.adam2)
        objective, log_probs = policy_update(self.actor, self.critics, self.tuner, batch["state"], self.rng_policy)
        diags["alpha_loss"] = alpha_update(self.tuner, log_probs)
        self.critics.soft_update_targets(self.cfg.eta)
        diags.update(critic_loss=res.loss, sac_loss=res.parts["sac"], policy_objective=objective,
                     alpha=self.tuner.alpha)

    def train_step(self) -> dict[str, float]:
        """One environment step followed by one update round (after warmup)."""
        self._env_step()
        diags = {k: 0.0 for k in DIAG_KEYS}
        if self.step_count >= self.cfg.warmup_steps and len(self.buffer) >= self.cfg.batch_size:
            if self.cfg.algo == "anchorq":
                self._update_anchorq(diags)
            else:
                self._update_backbone(diags)
        else:
            diags["alpha"] = self.tuner.alpha
        return diags
