"""Minimal numerical core: parameters, LSTM cell, dense layers, masked
softmax/cross-entropy, and Adam with decoupled weight decay.

Everything is 64-bit and single-threaded; the largest layer here is 64
units, so reproducibility and gradient-check precision win over speed.
Backward passes are written by hand for the fixed architectures used in
this package (no general autodiff graph).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import expit

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class NumericalError(ArithmeticError):
    """Non-finite values where finite ones are required."""


@dataclass
class RecurrentState:
    h: np.ndarray
    c: np.ndarray

    @staticmethod
    def zeros(hidden: int) -> "RecurrentState":
        return RecurrentState(np.zeros(hidden), np.zeros(hidden))

    def copy(self) -> "RecurrentState":
        return RecurrentState(self.h.copy(), self.c.copy())


class ParamSet:
    """Named parameter tensors with paired gradient and Adam buffers."""

    def __init__(self):
        self._value: dict[str, np.ndarray] = {}
        self._grad: dict[str, np.ndarray] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self._value:
            raise KeyError(f"duplicate parameter {name!r}")
        value = np.asarray(value, dtype=np.float64)
        self._value[name] = value
        self._grad[name] = np.zeros_like(value)
        self._m[name] = np.zeros_like(value)
        self._v[name] = np.zeros_like(value)
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self._value[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        self._value[name][...] = value

    def grad(self, name: str) -> np.ndarray:
        return self._grad[name]

    def names(self) -> list[str]:
        return list(self._value)

    def zero_grad(self) -> None:
        for g in self._grad.values():
            g[...] = 0.0

    def scale_grad(self, factor: float) -> None:
        for g in self._grad.values():
            g *= factor

    def grad_norm(self) -> float:
        total = 0.0
        for g in self._grad.values():
            total += float(np.sum(g * g))
        return math.sqrt(total)

    def clip_grad_norm(self, max_norm: float) -> float:
        norm = self.grad_norm()
        if norm > max_norm and norm > 0.0:
            self.scale_grad(max_norm / norm)
        return norm

    def copy_values(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self._value.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for k, v in values.items():
            self._value[k][...] = v

    def assert_finite(self) -> None:
        for name, v in self._value.items():
            if not np.all(np.isfinite(v)):
                raise NumericalError(f"parameter {name!r} is not finite")


def adam_step(params: ParamSet, lr: float, weight_decay: float = 0.0) -> None:
    """One bias-corrected Adam update over every parameter.

    Weight decay is decoupled: each parameter shrinks by lr*wd*theta before
    its Adam step, so the decay strength is independent of Adam's gradient
    scaling.  A non-finite gradient aborts the update for that parameter
    only.  Gradients are cleared afterwards.
    """
    params.step_count += 1
    t = params.step_count
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t
    for name in params.names():
        g = params.grad(name)
        if not np.all(np.isfinite(g)):
            logger.warning("non-finite gradient for %r; update skipped", name)
            g[...] = 0.0
            continue
        theta = params[name]
        if weight_decay:
            theta -= lr * weight_decay * theta
        m = params._m[name]
        v = params._v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        theta -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
        g[...] = 0.0


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return expit(z)


class LSTMCache(NamedTuple):
    xh: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c_prev: np.ndarray
    c_new: np.ndarray


class LSTMCell:
    """Single-layer LSTM with one packed weight matrix over [x; h].

    Gate update: i,f,o = sigmoid, g = tanh; c' = f*c + i*g; h' = o*tanh(c').
    """

    def __init__(self, params: ParamSet, name: str, in_dim: int, hidden: int,
                 rng: np.random.Generator | None = None):
        self.name = name
        self.in_dim = in_dim
        self.hidden = hidden
        scale = 1.0 / math.sqrt(in_dim + hidden)
        if rng is None:
            w = np.zeros((4 * hidden, in_dim + hidden))
        else:
            w = rng.uniform(-scale, scale, size=(4 * hidden, in_dim + hidden))
        self.W = params.add(f"{name}.W", w)
        self.b = params.add(f"{name}.b", np.zeros(4 * hidden))
        self._params = params

    def forward(self, x: np.ndarray, state: RecurrentState) -> tuple[RecurrentState, LSTMCache]:
        if x.shape != (self.in_dim,):
            raise ValueError(f"{self.name}: input shape {x.shape} != ({self.in_dim},)")
        if state.h.shape != (self.hidden,):
            raise ValueError(f"{self.name}: state shape {state.h.shape} != ({self.hidden},)")
        xh = np.concatenate([x, state.h])
        z = self.W @ xh + self.b
        H = self.hidden
        i = _sigmoid(z[:H])
        f = _sigmoid(z[H : 2 * H])
        o = _sigmoid(z[2 * H : 3 * H])
        g = np.tanh(z[3 * H :])
        c_new = f * state.c + i * g
        h_new = o * np.tanh(c_new)
        return RecurrentState(h_new, c_new), LSTMCache(xh, i, f, o, g, state.c, c_new)

    def backward(self, dh: np.ndarray, dc: np.ndarray, cache: LSTMCache
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Accumulate parameter grads; return (dx, dh_prev, dc_prev)."""
        xh, i, f, o, g, c_prev, c_new = cache
        tc = np.tanh(c_new)
        do = dh * tc
        dct = dc + dh * o * (1.0 - tc * tc)
        df = dct * c_prev
        di = dct * g
        dg = dct * i
        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            do * o * (1.0 - o),
            dg * (1.0 - g * g),
        ])
        gw = self._params.grad(f"{self.name}.W")
        gw += np.outer(dz, xh)
        gb = self._params.grad(f"{self.name}.b")
        gb += dz
        dxh = self.W.T @ dz
        return dxh[: self.in_dim], dxh[self.in_dim :], dct * f


def lstm_step(cell: LSTMCell, x: np.ndarray, state: RecurrentState) -> RecurrentState:
    return cell.forward(x, state)[0]


_ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "identity": (lambda z: z, lambda z, y: np.ones_like(z)),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, y: (z > 0).astype(np.float64)),
    "tanh": (np.tanh, lambda z, y: 1.0 - y * y),
}


class DenseCache(NamedTuple):
    x: np.ndarray
    z: np.ndarray
    y: np.ndarray


class Dense:
    def __init__(self, params: ParamSet, name: str, in_dim: int, out_dim: int,
                 activation: str = "identity", rng: np.random.Generator | None = None):
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.name = name
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        scale = 1.0 / math.sqrt(in_dim)
        if rng is None:
            w = np.zeros((out_dim, in_dim))
        else:
            w = rng.uniform(-scale, scale, size=(out_dim, in_dim))
        self.W = params.add(f"{name}.W", w)
        self.b = params.add(f"{name}.b", np.zeros(out_dim))
        self._params = params

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, DenseCache]:
        if x.shape != (self.in_dim,):
            raise ValueError(f"{self.name}: input shape {x.shape} != ({self.in_dim},)")
        z = self.W @ x + self.b
        y = _ACTIVATIONS[self.activation][0](z)
        return y, DenseCache(x, z, y)

    def backward(self, dy: np.ndarray, cache: DenseCache) -> np.ndarray:
        dz = dy * _ACTIVATIONS[self.activation][1](cache.z, cache.y)
        gw = self._params.grad(f"{self.name}.W")
        gw += np.outer(dz, cache.x)
        gb = self._params.grad(f"{self.name}.b")
        gb += dz
        return self.W.T @ dz


def dense_forward(layer: Dense, x: np.ndarray) -> np.ndarray:
    return layer.forward(x)[0]


def masked_softmax(logits: np.ndarray, visible: np.ndarray) -> np.ndarray:
    """Softmax over the positions where ``visible`` is True; zeros elsewhere."""
    if not visible.any():
        raise ValueError("softmax needs at least one visible position")
    z = logits[visible]
    z = z - z.max()
    e = np.exp(z)
    p = np.zeros_like(logits)
    p[visible] = e / e.sum()
    return p


def softmax_xent(logits: np.ndarray, target: int, visible: np.ndarray | None = None
                 ) -> tuple[np.ndarray, float]:
    """Probabilities and negative log-likelihood of ``target``.

    Returns (p, loss); the gradient of the loss w.r.t. the logits is
    p - onehot(target).  Stabilized by max subtraction.
    """
    if visible is None:
        visible = np.ones(len(logits), dtype=bool)
    if not 0 <= target < len(logits):
        raise IndexError(f"target {target} out of range for {len(logits)} logits")
    if not visible[target]:
        raise ValueError(f"target {target} is masked out")
    p = masked_softmax(logits, visible)
    loss = -math.log(max(p[target], 1e-300))
    return p, loss


def xent_grad(p: np.ndarray, target: int) -> np.ndarray:
    g = p.copy()
    g[target] -= 1.0
    return g


def entropy(p: np.ndarray) -> float:
    """Shannon entropy in nats, treating 0*log(0) as 0."""
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())
