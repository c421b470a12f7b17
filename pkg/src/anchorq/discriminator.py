"""State discriminator: demonstration-membership estimate, gate weight, safety reward.

Trained with the logistic loss plus a gradient penalty that drives the input
gradient norm of the probability toward 1 on interpolated samples. The
penalty needs second-order information, so this module carries a hand-derived
reverse-over-reverse pass specialised to relu hidden layers and a sigmoid
output head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import AdamState, DenseNet, ShapeError, adam_step, sigmoid

CLAMP_EPS = 1e-6


@dataclass
class Discriminator:
    net: DenseNet
    adam: AdamState
    gp_coefficient: float
    clamp_eps: float = CLAMP_EPS

    @classmethod
    def create(
        cls,
        input_dim: int,
        rng: np.random.Generator,
        hidden: tuple[int, ...] = (32, 32),
        learning_rate: float = 3e-4,
        gp_coefficient: float = 0.005,
    ) -> "Discriminator":
        net = DenseNet.create([input_dim, *hidden, 1], rng, "relu", "sigmoid")
        return cls(net=net, adam=AdamState.for_params(net.params(), learning_rate), gp_coefficient=gp_coefficient)


def gate(disc: Discriminator, states: np.ndarray) -> np.ndarray:
    """Clamped membership probability in [eps, 1 - eps]; scalar in, scalar out."""
    out = disc.net.forward(states)
    p = np.clip(out[..., 0] if out.ndim > 1 else out[0], disc.clamp_eps, 1.0 - disc.clamp_eps)
    return p


def safety_reward(disc: Discriminator, states: np.ndarray) -> np.ndarray:
    """log of the clamped gate value; always <= 0."""
    return np.log(gate(disc, states))


def _penalty_forward_backward(
    net: DenseNet, s_hat: np.ndarray
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Per-row penalties (||grad_input prob|| - 1)^2 and their parameter gradients.

    Relu second derivatives vanish almost everywhere, so only the sigmoid head
    contributes curvature; the rest of the reverse-over-reverse pass reuses the
    forward masks.
    """
    if net.hidden_activation != "relu" or net.output_activation != "sigmoid":
        raise ShapeError("gradient penalty requires relu hidden layers and a sigmoid output")
    n = s_hat.shape[0]
    L = net.n_layers

    # forward, keeping masks and activations
    xs = [s_hat]
    zs = []
    h = s_hat
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        zs.append(z)
        h = sigmoid(z) if i == L - 1 else np.maximum(z, 0.0)
        if i < L - 1:
            xs.append(h)
    prob = h  # (n, 1)
    masks = [(zs[i] > 0.0).astype(np.float64) for i in range(L - 1)]
    sig_d1 = prob * (1.0 - prob)
    sig_d2 = sig_d1 * (1.0 - 2.0 * prob)

    # input-gradient pass: g = d prob / d s_hat
    us = [None] * (L + 1)  # us[l] = adjoint of z_l in the input-grad computation, 1-indexed
    vs = [None] * L        # vs[l] = adjoint of x_l
    us[L] = sig_d1
    for layer in range(L, 0, -1):
        v = us[layer] @ net.weights[layer - 1]
        vs[layer - 1] = v
        if layer - 1 >= 1:
            us[layer - 1] = masks[layer - 2] * v
    g = vs[0]  # (n, in_dim)

    norms = np.sqrt(np.sum(g * g, axis=1))
    penalties = (norms - 1.0) ** 2

    # seed for the second reverse pass
    scale = 2.0 * (norms - 1.0) / np.maximum(norms, 1e-12)
    bar_v = scale[:, None] * g

    grads = [np.zeros_like(p) for p in net.params()]
    # reverse the input-gradient pass (it ran layer = L..1, so reverse is 1..L)
    bar_u = None
    for layer in range(1, L + 1):
        w = net.weights[layer - 1]
        grads[2 * (layer - 1)] += us[layer].T @ bar_v
        bar_u = bar_v @ w.T
        if layer < L:
            bar_v = masks[layer - 1] * bar_u
    bar_zL = sig_d2 * bar_u  # sigmoid head curvature

    # reverse the forward pass with the bar_zL seed
    bar_z = bar_zL
    for layer in range(L, 0, -1):
        grads[2 * (layer - 1)] += bar_z.T @ xs[layer - 1]
        grads[2 * (layer - 1) + 1] += bar_z.sum(axis=0)
        if layer > 1:
            bar_x = bar_z @ net.weights[layer - 1]
            bar_z = masks[layer - 2] * bar_x
    return penalties, grads


def discriminator_loss_and_grads(
    disc: Discriminator,
    rollout_states: np.ndarray,
    demo_states: np.ndarray,
    rng: np.random.Generator,
) -> tuple[float, list[np.ndarray], dict[str, float]]:
    """Logistic loss on both batches plus the interpolated gradient penalty.

    loss = (1/2N) [sum -log(1 - p(s_rollout)) + sum -log p(s_demo)]
         + gp * (1/2N) sum (||grad p(s_interp)|| - 1)^2
    with one interpolation coefficient per pair.
    """
    sb = np.asarray(rollout_states, dtype=np.float64)
    sd = np.asarray(demo_states, dtype=np.float64)
    if sb.shape != sd.shape:
        raise ShapeError(f"batch shapes differ: {sb.shape} vs {sd.shape}")
    n = sb.shape[0]
    eps = disc.clamp_eps

    out_b, trace_b = disc.net.forward_trace(sb)
    out_d, trace_d = disc.net.forward_trace(sd)
    pb = np.clip(out_b[:, 0], eps, 1.0 - eps)
    pd = np.clip(out_d[:, 0], eps, 1.0 - eps)
    logistic = float(np.sum(-np.log(1.0 - pb)) + np.sum(-np.log(pd))) / (2.0 * n)

    # d/dz of -log(1-sigmoid(z)) is sigmoid(z); of -log(sigmoid(z)) is sigmoid(z) - 1
    # (seeded with the unclamped probabilities; the clamp only guards the logs)
    grads_b, _ = disc.net.backward(trace_b, (out_b[:, 0] / (2.0 * n))[:, None], preactivation_grad=True)
    grads_d, _ = disc.net.backward(trace_d, ((out_d[:, 0] - 1.0) / (2.0 * n))[:, None], preactivation_grad=True)
    grads = [gb + gd for gb, gd in zip(grads_b, grads_d)]

    penalty_mean = 0.0
    if disc.gp_coefficient != 0.0:
        mix = rng.uniform(0.0, 1.0, size=(n, 1))
        s_hat = mix * sd + (1.0 - mix) * sb
        penalties, pen_grads = _penalty_forward_backward(disc.net, s_hat)
        penalty_mean = float(np.sum(penalties)) / (2.0 * n)
        scale = disc.gp_coefficient / (2.0 * n)
        grads = [g + scale * pg for g, pg in zip(grads, pen_grads)]

    loss = logistic + disc.gp_coefficient * penalty_mean
    parts = {"disc_logistic": logistic, "disc_penalty": penalty_mean}
    return loss, grads, parts


def update_discriminator(
    disc: Discriminator,
    rollout_states: np.ndarray,
    demo_states: np.ndarray,
    rng: np.random.Generator,
) -> float:
    """One Adam step on the discriminator; returns the pre-step loss."""
    loss, grads, _ = discriminator_loss_and_grads(disc, rollout_states, demo_states, rng)
    adam_step(disc.net.params(), grads, disc.adam)
    return loss
