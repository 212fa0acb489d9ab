"""Small fully-connected networks with exact analytic gradients, plus Adam.

Everything is plain float64 numpy.  A network is a list of (W, b) layers with
ReLU between hidden layers and a linear final layer; policy heads apply
softmax downstream.  backward() returns the exact gradient of the composed
network for an upstream gradient, which the finite-difference checker in
learn.grad_check verifies end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.weights + self.biases])

    def assert_finite(self) -> None:
        for a in self.weights + self.biases:
            if not np.all(np.isfinite(a)):
                raise ConfigError("network parameters contain non-finite values")


def init_mlp(
    in_dim: int,
    hidden_sizes: tuple[int, ...],
    out_dim: int,
    rng: np.random.Generator,
    final_scale: float = 1e-2,
) -> MlpParams:
    """He-initialized hidden layers; small final layer so initial outputs sit near 0."""
    sizes = [in_dim, *hidden_sizes, out_dim]
    weights, biases = [], []
    for i in range(len(sizes) - 1):
        fan_in = sizes[i]
        scale = np.sqrt(2.0 / fan_in) if i < len(sizes) - 2 else final_scale
        weights.append(rng.normal(0.0, scale, size=(sizes[i], sizes[i + 1])))
        biases.append(np.zeros(sizes[i + 1]))
    return MlpParams(weights, biases)


def forward(params: MlpParams, x: np.ndarray):
    """Returns (output, caches).  x is (batch, in_dim) or (in_dim,)."""
    squeeze = x.ndim == 1
    h = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if h.shape[1] != params.in_dim:
        raise ConfigError(f"input dim {h.shape[1]} != network dim {params.in_dim}")
    caches = []
    last = params.n_layers - 1
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ W + b
        caches.append((h, z))
        h = np.maximum(z, 0.0) if i < last else z
    if squeeze:
        return h[0], caches
    return h, caches


def backward(params: MlpParams, caches, dout: np.ndarray):
    """Exact gradients of the network output contracted with dout.

    Returns (weight_grads, bias_grads) matching params' shapes.
    """
    d = np.atleast_2d(dout)
    gw = [None] * params.n_layers
    gb = [None] * params.n_layers
    for i in range(params.n_layers - 1, -1, -1):
        h_in, z = caches[i]
        if i < params.n_layers - 1:
            d = d * (z > 0)
        gw[i] = h_in.T @ d
        gb[i] = d.sum(axis=0)
        if i > 0:
            d = d @ params.weights[i].T
    return gw, gb


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass
class AdamState:
    """Adam accumulators mirroring one MlpParams."""

    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def for_params(params: MlpParams) -> "AdamState":
        return AdamState(
            m_w=[np.zeros_like(w) for w in params.weights],
            v_w=[np.zeros_like(w) for w in params.weights],
            m_b=[np.zeros_like(b) for b in params.biases],
            v_b=[np.zeros_like(b) for b in params.biases],
        )


def adam_step(params: MlpParams, grads, state: AdamState, lr: float) -> None:
    """One in-place Adam update from (weight_grads, bias_grads)."""
    gw, gb = grads
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for tensors, grads_, m_list, v_list in (
        (params.weights, gw, state.m_w, state.v_w),
        (params.biases, gb, state.m_b, state.v_b),
    ):
        for p, g, m, v in zip(tensors, grads_, m_list, v_list):
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * np.square(g)
            p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def polyak_update(target: MlpParams, online: MlpParams, rho: float) -> None:
    """target <- (1 - rho) * target + rho * online, in place."""
    for t, o in zip(target.weights, online.weights):
        t *= 1.0 - rho
        t += rho * o
    for t, o in zip(target.biases, online.biases):
        t *= 1.0 - rho
        t += rho * o
