"""Minimal feed-forward trainer with exact per-sample gradients.

Fully-connected layers with a linear output layer, relu/tanh hidden
activations, cross-entropy or squared-error loss.  All arithmetic is 64-bit
and every operation is a pure function of its inputs, so identical inputs
give bit-identical outputs regardless of evaluation order.

Two gradient backends share one contract: a compiled extension
(``_gradkernels``) and a pure-NumPy fallback (``_gradnumpy``).  The backend
is selected once at import time; set ``AIRFEDSIM_BACKEND=python`` or
``=cython`` to force one.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import _gradnumpy

ACTIVATIONS = ("relu", "tanh")
LOSSES = ("cross_entropy", "squared_error")


def _select_backend():
    forced = os.environ.get("AIRFEDSIM_BACKEND", "").strip().lower()
    if forced == "python":
        return _gradnumpy, "python"
    try:
        from . import _gradkernels  # compiled extension, absent on pure installs

        return _gradkernels, "cython"
    except ImportError:
        if forced == "cython":
            raise ImportError(
                "AIRFEDSIM_BACKEND=cython but the compiled extension is not "
                "available; reinstall with a C compiler or unset the variable"
            ) from None
        return _gradnumpy, "python"


_impl, BACKEND = _select_backend()


@dataclass(frozen=True)
class ArchSpec:
    """Network architecture: layer widths plus activation and loss choice."""

    layer_widths: tuple[int, ...]
    activation: str = "relu"
    loss: str = "cross_entropy"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ValueError("need at least an input and an output layer")
        if any(w < 1 for w in widths):
            raise ValueError(f"layer widths must be positive, got {widths}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")

    @property
    def act_id(self) -> int:
        return ACTIVATIONS.index(self.activation)

    @property
    def loss_id(self) -> int:
        return LOSSES.index(self.loss)

    @property
    def widths_array(self) -> np.ndarray:
        return np.asarray(self.layer_widths, dtype=np.int64)


def param_count(arch: ArchSpec) -> int:
    """Number of scalar parameters (weights plus biases) implied by the arch."""
    return sum(
        fan_in * fan_out + fan_out
        for fan_in, fan_out in zip(arch.layer_widths[:-1], arch.layer_widths[1:])
    )


@dataclass
class Model:
    """Architecture plus one flat float64 weight vector."""

    arch: ArchSpec
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        expected = param_count(self.arch)
        if self.weights.shape != (expected,):
            raise ValueError(
                f"weight vector has shape {self.weights.shape}, arch implies ({expected},)"
            )
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("model weights must be finite")

    @property
    def dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class Sample:
    """One labelled example: a float feature vector and an integer class index."""

    features: np.ndarray
    label: int

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.label = int(self.label)


@dataclass
class GradientBatch:
    """Per-sample gradients with norms and importance-correction weights.

    ``weights[i]`` is the correction factor attached to ``grads[i]`` so the
    weighted mean stays an unbiased estimate after resampling; before any
    resampling all weights are 1 and ``raw_count`` equals the batch size.
    """

    grads: np.ndarray
    norms: np.ndarray
    weights: np.ndarray
    raw_count: int
    upsampled: bool = False
    losses: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.grads = np.ascontiguousarray(self.grads, dtype=np.float64)
        self.norms = np.ascontiguousarray(self.norms, dtype=np.float64)
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        n = self.grads.shape[0]
        if self.norms.shape != (n,) or self.weights.shape != (n,):
            raise ValueError("norms/weights length must match the gradient count")
        if np.any(self.weights <= 0.0):
            raise ValueError("importance weights must be positive")
        if not self.upsampled and self.raw_count != n:
            raise ValueError("raw_count must equal the batch size before resampling")

    @property
    def size(self) -> int:
        return self.grads.shape[0]

    def weighted_mean(self) -> np.ndarray:
        """Importance-corrected mean gradient, sum(w_i * g_i) / n."""
        return (self.weights[:, None] * self.grads).mean(axis=0)


def init_model(arch: ArchSpec, rng: np.random.Generator) -> Model:
    """Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer, W then b."""
    chunks = []
    for fan_in, fan_out in zip(arch.layer_widths[:-1], arch.layer_widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        chunks.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
        chunks.append(rng.uniform(-bound, bound, size=fan_out))
    return Model(arch, np.concatenate(chunks))


def batch_arrays(batch) -> tuple[np.ndarray, np.ndarray]:
    """Stack a list of samples (or pass through an (X, y) pair) as kernel inputs."""
    if isinstance(batch, tuple) and len(batch) == 2:
        X, y = batch
    else:
        if len(batch) == 0:
            raise ValueError("empty batch")
        X = np.stack([s.features for s in batch])
        y = np.asarray([s.label for s in batch], dtype=np.int64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    return X, y


def _check_batch(model: Model, X: np.ndarray, y: np.ndarray):
    if X.ndim != 2 or X.shape[1] != model.arch.layer_widths[0]:
        raise ValueError(
            f"feature dimension {X.shape[1] if X.ndim == 2 else X.shape} does not "
            f"match input width {model.arch.layer_widths[0]}"
        )
    out_dim = model.arch.layer_widths[-1]
    if np.any(y < 0) or (out_dim > 1 and np.any(y >= out_dim)):
        raise ValueError(f"labels must lie in [0, {out_dim})")


def per_sample_losses(model: Model, batch) -> np.ndarray:
    """Loss of each sample under the model; the mean equals the batch loss."""
    X, y = batch_arrays(batch)
    _check_batch(model, X, y)
    arch = model.arch
    return _impl.per_sample_losses(
        model.weights, arch.widths_array, arch.act_id, arch.loss_id, X, y
    )


def per_sample_gradients(model: Model, batch) -> GradientBatch:
    """One gradient vector per sample; the mean equals the full-batch gradient."""
    X, y = batch_arrays(batch)
    _check_batch(model, X, y)
    arch = model.arch
    grads, losses = _impl.per_sample_grads(
        model.weights, arch.widths_array, arch.act_id, arch.loss_id, X, y
    )
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite per-sample gradient")
    norms = np.linalg.norm(grads, axis=1)
    return GradientBatch(
        grads=grads,
        norms=norms,
        weights=np.ones(grads.shape[0]),
        raw_count=grads.shape[0],
        upsampled=False,
        losses=losses,
    )


def apply_update(model: Model, direction: np.ndarray, eta: float) -> Model:
    """Return a new model with weights w - eta * direction; the input is untouched."""
    direction = np.asarray(direction, dtype=np.float64)
    if direction.shape != model.weights.shape:
        raise ValueError(
            f"direction shape {direction.shape} does not match weights {model.weights.shape}"
        )
    if eta <= 0:
        raise ValueError("eta must be positive")
    return Model(model.arch, model.weights - eta * direction)
