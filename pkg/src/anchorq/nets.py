"""Dense-network numerics: exact reverse-mode gradients, Adam, Polyak averaging.

Everything is float64 numpy. Parameters live in flat lists
[W1, b1, W2, b2, ...] with W shaped (out, in), so all optimizer and
target-network code can treat a network as an opaque list of arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

CHECKPOINT_VERSION = 1

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_ACTIVATIONS = ("identity", "sigmoid", "softplus")


class ShapeError(ValueError):
    """Input or gradient dimensions do not match the network."""


class NonFiniteError(FloatingPointError):
    """A gradient or parameter stopped being a finite real."""


def _hidden_act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _hidden_act_deriv(name: str, z: np.ndarray, h: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    return 1.0 - h * h


def _output_act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "sigmoid":
        return sigmoid(z)
    return np.logaddexp(0.0, z)  # softplus


def _output_act_deriv(name: str, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    if name == "identity":
        return np.ones_like(z)
    if name == "sigmoid":
        return y * (1.0 - y)
    return sigmoid(z)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class ForwardTrace:
    """Intermediate values of one forward pass, consumed by backward()."""

    net_id: int
    inputs: list[np.ndarray]   # x_0 .. x_{L-1}, activations feeding each layer
    pre_acts: list[np.ndarray]  # z_1 .. z_L
    output: np.ndarray


@dataclass
class DenseNet:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    @classmethod
    def create(
        cls,
        layer_sizes: list[int],
        rng: np.random.Generator,
        hidden_activation: str = "relu",
        output_activation: str = "identity",
    ) -> "DenseNet":
        """Seeded init: weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], zero biases."""
        if len(layer_sizes) < 2 or any(s <= 0 for s in layer_sizes):
            raise ShapeError(f"bad layer sizes {layer_sizes}")
        if hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {hidden_activation!r}")
        if output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {output_activation!r}")
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(list(layer_sizes), weights, biases, hidden_activation, output_activation)

    @classmethod
    def zeros(
        cls,
        layer_sizes: list[int],
        hidden_activation: str = "relu",
        output_activation: str = "identity",
    ) -> "DenseNet":
        weights = [np.zeros((o, i)) for i, o in zip(layer_sizes[:-1], layer_sizes[1:])]
        biases = [np.zeros(o) for o in layer_sizes[1:]]
        return cls(list(layer_sizes), weights, biases, hidden_activation, output_activation)

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def set_params(self, params: list[np.ndarray]) -> None:
        if len(params) != 2 * self.n_layers:
            raise ShapeError("parameter list length mismatch")
        for i in range(self.n_layers):
            self.weights[i] = params[2 * i]
            self.biases[i] = params[2 * i + 1]

    def clone(self) -> "DenseNet":
        return DenseNet(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.hidden_activation,
            self.output_activation,
        )

    def _as_batch(self, x: np.ndarray) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"input shape {x.shape} does not match first layer size {self.in_dim}")
        return x, single

    def forward(self, x: np.ndarray) -> np.ndarray:
        x2, single = self._as_batch(x)
        h = x2
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            h = _output_act(self.output_activation, z) if i == last else _hidden_act(self.hidden_activation, z)
        return h[0] if single else h

    def forward_trace(self, x: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
        x2, _ = self._as_batch(x)
        inputs, pre_acts = [], []
        h = x2
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ w.T + b
            pre_acts.append(z)
            h = _output_act(self.output_activation, z) if i == last else _hidden_act(self.hidden_activation, z)
        return h, ForwardTrace(id(self), inputs, pre_acts, h)

    def backward(
        self,
        trace: ForwardTrace,
        dout: np.ndarray,
        preactivation_grad: bool = False,
    ) -> tuple[list[np.ndarray], np.ndarray]:
        """Reverse-mode gradients of a scalar loss given d(loss)/d(output).

        Returns (parameter gradients summed over the batch, gradient wrt the
        input rows). With preactivation_grad the seed is d(loss)/d(z_L), which
        sidesteps dividing by a saturated output activation derivative.
        """
        if trace.net_id != id(self):
            raise ShapeError("trace was produced by a different network")
        dout = np.asarray(dout, dtype=np.float64)
        if dout.ndim == 1:
            dout = dout[None, :]
        n = trace.inputs[0].shape[0]
        if dout.shape != (n, self.out_dim):
            raise ShapeError(f"output gradient shape {dout.shape} != ({n}, {self.out_dim})")
        last = self.n_layers - 1
        if preactivation_grad:
            dz = dout
        else:
            dz = dout * _output_act_deriv(self.output_activation, trace.pre_acts[last], trace.output)
        grads: list[np.ndarray] = [np.empty(0)] * (2 * self.n_layers)
        for i in range(last, -1, -1):
            grads[2 * i] = dz.T @ trace.inputs[i]
            grads[2 * i + 1] = dz.sum(axis=0)
            dx = dz @ self.weights[i]
            if i > 0:
                # trace.inputs[i] is the post-activation of layer i-1
                dz = dx * _hidden_act_deriv(self.hidden_activation, trace.pre_acts[i - 1], trace.inputs[i])
        return grads, dx


@dataclass
class AdamState:
    """Bias-corrected Adam moments for one parameter list."""

    step_count: int
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: list[np.ndarray], learning_rate: float) -> "AdamState":
        if learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        return cls(
            step_count=0,
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
            learning_rate=learning_rate,
        )


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """One in-place Adam update. Rejects non-finite gradients, leaving params untouched."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ShapeError("params/grads/state length mismatch")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient in parameter block {i}; step rejected")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
        if not np.all(np.isfinite(p)):
            raise NonFiniteError(f"parameters became non-finite at step {t}")


def soft_update(target: list[np.ndarray], online: list[np.ndarray], rate: float) -> None:
    """target <- (1 - rate) * target + rate * online, rate is the weight on the online params."""
    if not (0.0 < rate < 1.0):
        raise ValueError(f"soft-update rate {rate} outside (0, 1)")
    if len(target) != len(online):
        raise ShapeError("parameter list length mismatch")
    for t, o in zip(target, online):
        if t.shape != o.shape:
            raise ShapeError(f"target shape {t.shape} != online shape {o.shape}")
        t *= 1.0 - rate
        t += rate * o


def net_to_doc(net: DenseNet, adam: AdamState | None = None) -> dict:
    """Self-describing checkpoint document (row-major flattened parameters)."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "layer_sizes": list(net.layer_sizes),
        "hidden_activation": net.hidden_activation,
        "output_activation": net.output_activation,
        "params": [p.ravel(order="C").tolist() for p in net.params()],
    }
    if adam is not None:
        doc["adam"] = {
            "step_count": adam.step_count,
            "learning_rate": adam.learning_rate,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "epsilon": adam.epsilon,
            "first_moment": [m.ravel(order="C").tolist() for m in adam.first_moment],
            "second_moment": [v.ravel(order="C").tolist() for v in adam.second_moment],
        }
    return doc


def net_from_doc(doc: dict) -> tuple[DenseNet, AdamState | None]:
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {doc.get('format_version')!r}")
    net = DenseNet.zeros(list(doc["layer_sizes"]), doc["hidden_activation"], doc["output_activation"])
    shapes = [p.shape for p in net.params()]
    flat = doc["params"]
    if len(flat) != len(shapes):
        raise ShapeError("checkpoint parameter count mismatch")
    params = [np.array(v, dtype=np.float64).reshape(s) for v, s in zip(flat, shapes)]
    net.set_params(params)
    adam = None
    if "adam" in doc:
        a = doc["adam"]
        adam = AdamState(
            step_count=int(a["step_count"]),
            first_moment=[np.array(v, dtype=np.float64).reshape(s) for v, s in zip(a["first_moment"], shapes)],
            second_moment=[np.array(v, dtype=np.float64).reshape(s) for v, s in zip(a["second_moment"], shapes)],
            learning_rate=float(a["learning_rate"]),
            beta1=float(a["beta1"]),
            beta2=float(a["beta2"]),
            epsilon=float(a["epsilon"]),
        )
    return net, adam


def save_net(path: str, net: DenseNet, adam: AdamState | None = None) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(net_to_doc(net, adam), f)


def load_net(path: str) -> tuple[DenseNet, AdamState | None]:
    with open(path, "r", encoding="utf-8") as f:
        return net_from_doc(json.load(f))
