"""Adaptive sensing control with gradient-norm importance resampling.

A device starts a round with a small batch, keeps acquiring one sample at a
time while the running variance of the per-sample gradient norms stays
unpromising, then upsamples the batch to the full size by drawing indices
with probability proportional to gradient norms.  Each drawn gradient
carries the correction factor (1/b)/q_i so the weighted mean remains an
unbiased estimate of the raw-batch mean.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .nn import GradientBatch, Model, per_sample_gradients


@dataclass(frozen=True)
class SensingControllerState:
    """Stopping-threshold state carried across rounds for one device."""

    theta_bar: float = 0.0  # EMA of observed norm variance
    alpha: float = 0.1      # EMA factor: theta_bar' = alpha*theta + (1-alpha)*theta_bar
    b_min: int = 4
    b_max: int = 32

    def __post_init__(self):
        if self.theta_bar < 0:
            raise ValueError("theta_bar must be nonnegative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.b_min < 1 or self.b_max < 1 or self.b_min > self.b_max:
            raise ValueError("need 1 <= b_min <= b_max")


@dataclass(frozen=True)
class MomentEstimate:
    """Second and fourth central moments of the gradient-norm distribution."""

    mu2: float
    mu4: float

    def __post_init__(self):
        if self.mu2 < 0:
            raise ValueError("mu2 must be nonnegative")
        if self.mu4 < self.mu2**2:
            raise ValueError("mu4 must be >= mu2^2")


def sample_variance(values, n: int | None = None) -> float:
    """Unbiased sample variance (n-1 denominator)."""
    values = np.asarray(values, dtype=np.float64)
    count = values.shape[0] if n is None else n
    if count < 2:
        raise ValueError("sample variance needs at least 2 values")
    return float(np.var(values[:count], ddof=1))


def importance_weights(norms) -> np.ndarray:
    """Sampling probabilities q_i proportional to gradient norms.

    An all-zero batch (converged or degenerate gradients) falls back to the
    uniform distribution rather than erroring.
    """
    norms = np.asarray(norms, dtype=np.float64)
    if norms.ndim != 1 or norms.size == 0:
        raise ValueError("norms must be a nonempty vector")
    if np.any(norms < 0):
        raise ValueError("norms must be nonnegative")
    total = norms.sum()
    if total <= 0.0:
        return np.full(norms.size, 1.0 / norms.size)
    return norms / total


def resample_to(batch: GradientBatch, b_bar: int, gen: np.random.Generator) -> GradientBatch:
    """Upsample a raw batch to b_bar gradients drawn i.i.d. from q.

    Drawn gradient j gets weight (1/b)/q_j, so sum(w_j g_j)/b_bar is unbiased
    for the plain mean of the b raw gradients.
    """
    if batch.upsampled:
        raise ValueError("batch was already resampled")
    if b_bar < 1:
        raise ValueError("b_bar must be >= 1")
    b = batch.size
    q = importance_weights(batch.norms)
    idx = gen.choice(b, size=b_bar, replace=True, p=q)
    weights = (1.0 / b) / q[idx]
    return GradientBatch(
        grads=batch.grads[idx],
        norms=batch.norms[idx],
        weights=weights,
        raw_count=batch.raw_count,
        upsampled=True,
        losses=None if batch.losses is None else batch.losses[idx],
    )


def expected_variance_reduction(norms, b: int, b_bar: int) -> float:
    """Variance-reduction potential of a b-sample batch upsampled to b_bar.

    The b/b_bar factor accounts for the unchanged information content of the
    enlarged batch.
    """
    norms = np.asarray(norms, dtype=np.float64)
    if b != norms.shape[0]:
        raise ValueError("b must equal len(norms)")
    if b < 2:
        raise ValueError("need at least 2 norms")
    if b_bar < 1:
        raise ValueError("b_bar must be >= 1")
    return (b / b_bar) * sample_variance(norms)


def moment_prediction(est: MomentEstimate, b: int, b_bar: int) -> tuple[float, float]:
    """Closed-form mean and variance of the variance reduction at raw size b.

    mean = (b-1)/b_bar * mu2
    var  = mu4/b_bar - (b-3)*mu2^2 / ((b-1)*b_bar)
    """
    if b < 2:
        raise ValueError("b must be >= 2")
    if b_bar < 1:
        raise ValueError("b_bar must be >= 1")
    mean = (b - 1) / b_bar * est.mu2
    var = est.mu4 / b_bar - (b - 3) * est.mu2**2 / ((b - 1) * b_bar)
    return mean, var


class _RunningVariance:
    """Incremental unbiased variance over appended scalars (O(1) per append)."""

    __slots__ = ("n", "s1", "s2")

    def __init__(self):
        self.n = 0
        self.s1 = 0.0
        self.s2 = 0.0

    def extend(self, values):
        for v in np.asarray(values, dtype=np.float64).ravel():
            self.n += 1
            self.s1 += v
            self.s2 += v * v

    def variance(self) -> float:
        if self.n < 2:
            return 0.0
        var = (self.s2 - self.s1 * self.s1 / self.n) / (self.n - 1)
        return max(var, 0.0)


def adaptive_collect(
    model: Model,
    stream,
    state: SensingControllerState,
    gen: np.random.Generator,
    grad_fn=per_sample_gradients,
) -> tuple[GradientBatch, SensingControllerState]:
    """One round of threshold-controlled acquisition plus upsampling.

    Acquires ``b_min`` samples, then keeps adding one sample at a time while
    ``b < b_max`` and the scaled variance-reduction estimate ``b*theta/b_max``
    stays below the running threshold.  The returned batch always holds
    ``b_max`` gradients (resampled by norm) and records how many raw samples
    were actually sensed; the threshold is EMA-updated with the last observed
    (unscaled) variance.
    """
    # Array draws skip per-sample object construction in the hot loop.
    acquire = stream.draw_arrays if hasattr(stream, "draw_arrays") else stream.draw

    batch = grad_fn(model, acquire(state.b_min))
    grads = [batch.grads]
    norms = [batch.norms]
    losses = [batch.losses]
    acc = _RunningVariance()
    acc.extend(batch.norms)
    b = state.b_min
    theta = acc.variance()

    while b < state.b_max and (b * theta / state.b_max) < state.theta_bar:
        one = grad_fn(model, acquire(1))
        grads.append(one.grads)
        norms.append(one.norms)
        losses.append(one.losses)
        acc.extend(one.norms)
        b += 1
        theta = acc.variance()

    raw = GradientBatch(
        grads=np.concatenate(grads, axis=0),
        norms=np.concatenate(norms),
        weights=np.ones(b),
        raw_count=b,
        upsampled=False,
        losses=np.concatenate(losses) if losses[0] is not None else None,
    )
    full = resample_to(raw, state.b_max, gen)
    new_state = replace(
        state, theta_bar=state.alpha * theta + (1.0 - state.alpha) * state.theta_bar
    )
    return full, new_state
