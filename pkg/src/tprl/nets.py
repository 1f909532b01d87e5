"""Small MLPs with exact manual backpropagation and an Adam optimizer.

Architecture is fixed to affine-tanh-affine-tanh-affine with hidden sizes
(64, 32).  Everything is float64 numpy; updates are deterministic functions
of (params, grads, optimizer state).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HIDDEN_SIZES = (64, 32)


class NetworkError(ValueError):
    pass


@dataclass
class MlpParams:
    weights: list  # [(h1, in), (h2, h1), (out, h2)]
    biases: list  # [(h1,), (h2,), (out,)]

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    @property
    def layer_sizes(self) -> tuple:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)


def mlp_init(in_dim: int, out_dim: int, rng: np.random.Generator, final_scale: float = 1.0) -> MlpParams:
    """Xavier-uniform init; the output layer can be scaled down so the initial
    policy is near uniform."""
    sizes = (in_dim,) + HIDDEN_SIZES + (out_dim,)
    weights, biases = [], []
    for i in range(len(sizes) - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        if i == len(sizes) - 2:
            w *= final_scale
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def _as_batch(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim == 2:
        return arr, False
    raise NetworkError(f"input must be a vector or a batch, got shape {arr.shape}")


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    """Deterministic forward pass; accepts a single vector or a batch."""
    batch, single = _as_batch(x)
    if batch.shape[1] != params.weights[0].shape[1]:
        raise NetworkError(
            f"input dim {batch.shape[1]} does not match network input {params.weights[0].shape[1]}"
        )
    a = batch
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        a = z if i == last else np.tanh(z)
    return a[0] if single else a


def mlp_forward_cached(params: MlpParams, x: np.ndarray):
    """Forward pass keeping activations for backprop. Batch input only."""
    if x.ndim != 2:
        raise NetworkError("cached forward expects a batch")
    activations = [x]
    a = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        a = z if i == last else np.tanh(z)
        activations.append(a)
    return a, activations


def mlp_backward(params: MlpParams, activations: list, dout: np.ndarray):
    """Exact gradients of sum(loss) given d(loss)/d(output); returns
    per-layer (dW, db) lists matching the parameter layout."""
    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.biases)
    delta = dout
    for i in range(len(params.weights) - 1, -1, -1):
        a_prev = activations[i]
        grads_w[i] = delta.T @ a_prev
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            a_cur = activations[i]  # post-tanh activation of layer i
            delta = (delta @ params.weights[i]) * (1.0 - a_cur ** 2)
    return grads_w, grads_b


@dataclass
class AdamState:
    m_w: list
    v_w: list
    m_b: list
    v_b: list
    t: int = 0


def adam_init(params: MlpParams) -> AdamState:
    return AdamState(
        m_w=[np.zeros_like(w) for w in params.weights],
        v_w=[np.zeros_like(w) for w in params.weights],
        m_b=[np.zeros_like(b) for b in params.biases],
        v_b=[np.zeros_like(b) for b in params.biases],
    )


def adam_step(
    params: MlpParams,
    grads_w: list,
    grads_b: list,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One Adam descent step, in place, in a fixed layer order."""
    state.t += 1
    t = state.t
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for i in range(len(params.weights)):
        for p, g, m, v in (
            (params.weights[i], grads_w[i], state.m_w[i], state.v_w[i]),
            (params.biases[i], grads_b[i], state.m_b[i], state.v_b[i]),
        ):
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def flatten_params(params: MlpParams) -> np.ndarray:
    parts = []
    for w, b in zip(params.weights, params.biases):
        parts.append(w.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts)


def set_flat_params(params: MlpParams, flat: np.ndarray) -> None:
    i = 0
    for w, b in zip(params.weights, params.biases):
        n = w.size
        w[...] = flat[i : i + n].reshape(w.shape)
        i += n
        n = b.size
        b[...] = flat[i : i + n].reshape(b.shape)
        i += n
    if i != flat.size:
        raise NetworkError("flat parameter size mismatch")


def flatten_grads(grads_w: list, grads_b: list) -> np.ndarray:
    parts = []
    for gw, gb in zip(grads_w, grads_b):
        parts.append(gw.ravel())
        parts.append(gb.ravel())
    return np.concatenate(parts)
