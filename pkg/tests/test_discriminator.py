import math

import numpy as np
import pytest

from anchorq.discriminator import (
    CLAMP_EPS,
    Discriminator,
    discriminator_loss_and_grads,
    gate,
    safety_reward,
    update_discriminator,
)
from anchorq.nets import AdamState, DenseNet, ShapeError
from anchorq.oracle import finite_diff_grad, grad_mismatches


def zero_disc(dim=3, gp=0.0):
    net = DenseNet.zeros([dim, 8, 8, 1], "relu", "sigmoid")
    return Discriminator(net=net, adam=AdamState.for_params(net.params(), 3e-4), gp_coefficient=gp)


def cloud_batches(rng, n=64, dim=2, gap=4.0):
    rollout = rng.normal(size=(n, dim)) - gap / 2
    demo = rng.normal(size=(n, dim)) + gap / 2
    return rollout, demo


class TestGate:
    def test_fresh_zero_net_outputs_half_everywhere(self):
        disc = zero_disc()
        states = np.random.default_rng(0).normal(size=(10, 3))
        assert np.all(gate(disc, states) == 0.5)

    def test_gate_is_deterministic(self):
        rng = np.random.default_rng(1)
        disc = Discriminator.create(3, rng)
        s = rng.normal(size=(5, 3))
        assert np.array_equal(gate(disc, s), gate(disc, s))

    def test_trained_separation(self):
        rng = np.random.default_rng(2)
        disc = Discriminator.create(2, rng, gp_coefficient=0.005)
        data_rng = np.random.default_rng(3)
        for _ in range(1500):
            sb, sd = cloud_batches(data_rng)
            update_discriminator(disc, sb, sd, data_rng)
        far_rollout = np.full((100, 2), -2.0) + 0.3 * data_rng.normal(size=(100, 2))
        demo_like = np.full((100, 2), 2.0) + 0.3 * data_rng.normal(size=(100, 2))
        assert float(np.mean(gate(disc, demo_like))) > 0.95
        assert float(np.mean(gate(disc, far_rollout))) < 0.05

    def test_output_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(4)
        disc = Discriminator.create(2, rng)
        disc.net.biases[-1][0] = 100.0  # saturate the sigmoid
        g = gate(disc, np.zeros((1, 2)))
        assert g[0] == 1.0 - CLAMP_EPS
        disc.net.biases[-1][0] = -100.0
        assert gate(disc, np.zeros((1, 2)))[0] == CLAMP_EPS


class TestSafetyReward:
    def test_upper_clamp_is_near_zero(self):
        disc = zero_disc()
        disc.net.biases[-1][0] = 100.0
        r = safety_reward(disc, np.zeros((1, 3)))[0]
        assert -2e-6 < r < 0.0

    def test_log_identity_at_exp_minus_one(self):
        disc = zero_disc()
        p = math.exp(-1.0)
        disc.net.biases[-1][0] = math.log(p / (1.0 - p))  # sigmoid(bias) = e^-1
        r = safety_reward(disc, np.zeros((1, 3)))[0]
        assert abs(r + 1.0) < 1e-12

    def test_lower_clamp_value(self):
        disc = zero_disc()
        disc.net.biases[-1][0] = -100.0
        r = safety_reward(disc, np.zeros((1, 3)))[0]
        assert abs(r - math.log(1e-6)) < 1e-9

    def test_equals_log_gate_exactly_on_random_states(self):
        rng = np.random.default_rng(5)
        disc = Discriminator.create(4, rng)
        states = rng.normal(size=(1000, 4))
        assert np.array_equal(safety_reward(disc, states), np.log(gate(disc, states)))


class TestUpdate:
    def test_untrained_constant_output_loss_is_log_two(self):
        disc = zero_disc(gp=0.0)
        rng = np.random.default_rng(6)
        loss, _, _ = discriminator_loss_and_grads(disc, rng.normal(size=(8, 3)),
                                                  rng.normal(size=(8, 3)), rng)
        assert abs(loss - math.log(2.0)) < 1e-12

    def test_zero_gradient_penalty_adds_half_coefficient(self):
        # zero input gradient -> every pair contributes (0 - 1)^2 = 1, and the
        # penalty term carries the same 1/(2N) prefactor as the logistic part
        disc = zero_disc(gp=0.005)
        rng = np.random.default_rng(7)
        loss, _, _ = discriminator_loss_and_grads(disc, rng.normal(size=(8, 3)),
                                                  rng.normal(size=(8, 3)), rng)
        assert abs(loss - (math.log(2.0) + 0.005 * 0.5)) < 1e-12

    def test_full_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        disc = Discriminator.create(3, rng, hidden=(8, 8), gp_coefficient=0.01)
        sb = rng.normal(size=(6, 3))
        sd = rng.normal(size=(6, 3)) + 1.0

        _, grads, _ = discriminator_loss_and_grads(disc, sb, sd, np.random.default_rng(99))

        def loss_fn(flat):
            shapes = [p.shape for p in disc.net.params()]
            out, i = [], 0
            for s in shapes:
                k = int(np.prod(s))
                out.append(np.array(flat[i:i + k]).reshape(s))
                i += k
            saved = [p.copy() for p in disc.net.params()]
            disc.net.set_params(out)
            val, _, _ = discriminator_loss_and_grads(disc, sb, sd, np.random.default_rng(99))
            disc.net.set_params(saved)
            return val

        flat = np.concatenate([p.ravel() for p in disc.net.params()])
        numeric = finite_diff_grad(loss_fn, flat, 1e-5)
        analytic = np.concatenate([g.ravel() for g in grads])
        assert grad_mismatches(analytic, numeric) == []

    def test_without_penalty_equals_independent_logistic_gradient(self):
        # oracle: logistic-regression gradient computed from scratch by chain rule
        rng = np.random.default_rng(9)
        disc = Discriminator.create(2, rng, hidden=(4,), gp_coefficient=0.0)
        sb = rng.normal(size=(5, 2))
        sd = rng.normal(size=(5, 2))
        _, grads, _ = discriminator_loss_and_grads(disc, sb, sd, rng)

        w1, b1 = disc.net.weights[0], disc.net.biases[0]
        w2, b2 = disc.net.weights[1], disc.net.biases[1]
        gw1 = np.zeros_like(w1); gb1 = np.zeros_like(b1)
        gw2 = np.zeros_like(w2); gb2 = np.zeros_like(b2)
        n = sb.shape[0]
        for x, label in [(row, 0.0) for row in sb] + [(row, 1.0) for row in sd]:
            z1 = w1 @ x + b1
            h = np.maximum(z1, 0.0)
            z2 = w2 @ h + b2
            p = 1.0 / (1.0 + np.exp(-z2[0]))
            dz2 = (p - label) / (2.0 * n)   # cross-entropy gradient wrt the logit
            gw2 += dz2 * h[None, :]
            gb2 += dz2
            dh = dz2 * w2[0]
            dz1 = dh * (z1 > 0)
            gw1 += np.outer(dz1, x)
            gb1 += dz1
        for got, want in zip(grads, [gw1, gb1, gw2, gb2]):
            assert np.allclose(got, want, atol=1e-12)

    def test_mismatched_batch_shapes_rejected(self):
        rng = np.random.default_rng(10)
        disc = Discriminator.create(3, rng)
        with pytest.raises(ShapeError):
            discriminator_loss_and_grads(disc, rng.normal(size=(4, 3)), rng.normal(size=(5, 3)), rng)

    def test_loss_trend_on_fixed_separable_clouds(self):
        # 100-step moving average non-increasing after step 500 (at most 2 violations)
        rng = np.random.default_rng(11)
        disc = Discriminator.create(2, rng, gp_coefficient=0.005)
        data_rng = np.random.default_rng(12)
        sb_all, sd_all = cloud_batches(data_rng, n=256)
        losses = []
        for i in range(2000):
            idx = data_rng.integers(0, 256, size=64)
            losses.append(update_discriminator(disc, sb_all[idx], sd_all[idx], data_rng))
        avg = np.convolve(losses, np.ones(100) / 100, mode="valid")
        tail = avg[500 - 99:]
        violations = int(np.sum(np.diff(tail) > 1e-4))
        assert violations <= 2
