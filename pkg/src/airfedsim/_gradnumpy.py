"""Pure-NumPy gradient kernels (fallback backend).

Same contract as the compiled ``_gradkernels`` extension: given a flat
weight vector and a sample batch, compute per-sample losses and per-sample
gradient vectors.  Weight layout per layer: W (out x in, row-major), then b.
"""

from __future__ import annotations

import numpy as np

ACT_RELU = 0
ACT_TANH = 1
LOSS_CROSS_ENTROPY = 0
LOSS_SQUARED_ERROR = 1

PROB_CLAMP = 1e-12  # probability floor before the log in cross-entropy


def unpack_layers(weights: np.ndarray, widths) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views (W, b) per layer into the flat weight vector."""
    layers = []
    off = 0
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        w = weights[off : off + fan_in * fan_out].reshape(fan_out, fan_in)
        off += fan_in * fan_out
        b = weights[off : off + fan_out]
        off += fan_out
        layers.append((w, b))
    return layers


def _forward(weights, widths, act_id, X):
    """Batched forward pass; returns (pre-activations per layer, activations per layer)."""
    layers = unpack_layers(weights, widths)
    acts = [X]
    pre = []
    a = X
    for i, (w, b) in enumerate(layers):
        z = a @ w.T + b
        pre.append(z)
        if i < len(layers) - 1:
            a = np.maximum(z, 0.0) if act_id == ACT_RELU else np.tanh(z)
        else:
            a = z  # linear output layer
        acts.append(a)
    return pre, acts


def _targets(y, out_dim):
    """Squared-error targets: one-hot for multi-output, raw label value for scalar output."""
    n = y.shape[0]
    if out_dim == 1:
        return y.astype(np.float64).reshape(n, 1)
    t = np.zeros((n, out_dim), dtype=np.float64)
    t[np.arange(n), y] = 1.0
    return t


def _loss_and_delta(z_out, y, loss_id):
    """Per-sample losses and the output-layer error signal dL/dz."""
    n, out_dim = z_out.shape
    if loss_id == LOSS_CROSS_ENTROPY:
        shifted = z_out - z_out.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        p = e / e.sum(axis=1, keepdims=True)
        picked = np.maximum(p[np.arange(n), y], PROB_CLAMP)
        losses = -np.log(picked)
        delta = p.copy()
        delta[np.arange(n), y] -= 1.0
        return losses, delta
    t = _targets(y, out_dim)
    diff = z_out - t
    return np.einsum("no,no->n", diff, diff), 2.0 * diff


def per_sample_losses(weights, widths, act_id, loss_id, X, y):
    pre, _ = _forward(weights, widths, act_id, X)
    losses, _ = _loss_and_delta(pre[-1], y, loss_id)
    return losses


def per_sample_grads(weights, widths, act_id, loss_id, X, y):
    """Per-sample gradients (n x d) and per-sample losses (n,)."""
    n = X.shape[0]
    d = weights.shape[0]
    pre, acts = _forward(weights, widths, act_id, X)
    losses, delta = _loss_and_delta(pre[-1], y, loss_id)

    layers = unpack_layers(weights, widths)
    grads = np.empty((n, d), dtype=np.float64)

    # Layer weight offsets in the flat vector.
    offsets = []
    off = 0
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        offsets.append(off)
        off += fan_in * fan_out + fan_out

    for li in range(len(layers) - 1, -1, -1):
        w, _ = layers[li]
        fan_out, fan_in = w.shape
        off = offsets[li]
        a_prev = acts[li]
        grads[:, off : off + fan_out * fan_in] = np.einsum(
            "no,ni->noi", delta, a_prev
        ).reshape(n, fan_out * fan_in)
        grads[:, off + fan_out * fan_in : off + fan_out * fan_in + fan_out] = delta
        if li > 0:
            da = delta @ w
            z_prev = pre[li - 1]
            if act_id == ACT_RELU:
                delta = da * (z_prev > 0.0)
            else:
                th = np.tanh(z_prev)
                delta = da * (1.0 - th * th)
    return grads, losses
