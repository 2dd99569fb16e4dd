"""Dense layers, activations, initialization and the Adam optimizer.

Matrices are plain float64 ``numpy`` arrays laid out as ``(rows, cols)``;
a batch of N samples with F features is an ``(N, F)`` array.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, NumericalError, ShapeError

ACTIVATIONS = ("relu", "sigmoid", "identity")


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activate(pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(pre, 0.0)
    if activation == "sigmoid":
        return sigmoid(pre)
    if activation == "identity":
        return pre
    raise ConfigError(f"unknown activation {activation!r}")


@dataclass(frozen=True)
class DenseLayer:
    """Fully connected layer ``activation(x @ weight.T + bias)``."""

    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ShapeError("weight must be 2-D and bias 1-D")
        if self.bias.shape[0] != self.weight.shape[0]:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} != weight rows {self.weight.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")

    @property
    def in_width(self) -> int:
        return self.weight.shape[1]

    @property
    def out_width(self) -> int:
        return self.weight.shape[0]


def _check_input(layer: DenseLayer, x: np.ndarray) -> None:
    if x.ndim != 2 or x.shape[1] != layer.in_width:
        got = x.shape[1] if x.ndim == 2 else x.shape
        raise ShapeError(f"layer expects input width {layer.in_width}, got {got}")


def dense_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    """Apply ``layer`` to the rows of ``x``."""
    _check_input(layer, x)
    return activate(x @ layer.weight.T + layer.bias, layer.activation)


def linear_backward(weight: np.ndarray, x: np.ndarray, grad_pre: np.ndarray):
    """Gradients of an affine map given the gradient w.r.t. its pre-activation."""
    return grad_pre.T @ x, grad_pre.sum(axis=0), grad_pre @ weight


def dense_backward(layer: DenseLayer, cached_input: np.ndarray, upstream_grad: np.ndarray):
    """Backpropagate ``upstream_grad`` (w.r.t. the layer output) through ``layer``.

    Returns ``(grad_weight, grad_bias, grad_input)``.
    """
    _check_input(layer, cached_input)
    expected = (cached_input.shape[0], layer.out_width)
    if upstream_grad.shape != expected:
        raise ShapeError(f"upstream gradient shape {upstream_grad.shape} != {expected}")
    pre = cached_input @ layer.weight.T + layer.bias
    if layer.activation == "relu":
        grad_pre = upstream_grad * (pre > 0)
    elif layer.activation == "sigmoid":
        s = sigmoid(pre)
        grad_pre = upstream_grad * s * (1.0 - s)
    else:
        grad_pre = upstream_grad
    return linear_backward(layer.weight, cached_input, grad_pre)


def init_params(layer_spec: tuple[int, int, str], seed) -> DenseLayer:
    """Glorot-uniform weights and zero bias for ``(in_width, out_width, activation)``.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    fan_in, fan_out, activation = layer_spec
    if fan_in <= 0 or fan_out <= 0:
        raise ConfigError(f"layer widths must be positive, got {fan_in}->{fan_out}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    weight = rng.uniform(-limit, limit, size=(fan_out, fan_in))
    return DenseLayer(weight, np.zeros(fan_out), activation)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **kwargs) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **kwargs,
        )


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState):
    """One bias-corrected Adam update.

    Returns ``(new_params, new_state)``; the inputs are left untouched.
    """
    if not state.m:
        state = AdamState.for_params(
            params, lr=state.lr, beta1=state.beta1, beta2=state.beta2, eps=state.eps
        )
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ShapeError("parameter, gradient and moment lists differ in length")
    for i, (p, g, m) in enumerate(zip(params, grads, state.m)):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"block {i}: param {p.shape}, grad {g.shape}, moment {m.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in parameter block {i}")

    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**step
    bc2 = 1.0 - b2**step
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_params.append(p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(state.lr, b1, b2, state.eps, step, new_m, new_v)
    return new_params, new_state
