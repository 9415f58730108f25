"""Multiple-access channel simulation: block fading, channel-inversion power
control, over-the-air gradient aggregation, and denoising-factor schedules.

With perfect CSI and channel inversion the fading phase cancels exactly, so
only channel magnitudes are drawn.  The aggregated gradient equals the plain
device average plus i.i.d. Gaussian noise of per-coordinate variance
``p_n / c_r``; scaling the denoising factor ``c_r`` trades transmit energy
against aggregate noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SCHEMES = ("proposed", "vanilla", "reversed", "optimal")


@dataclass(frozen=True)
class ChannelRealization:
    """Per-device fading magnitudes for one round, with the worst-case floor."""

    h_mag: np.ndarray
    h_floor: float

    def __post_init__(self):
        object.__setattr__(
            self, "h_mag", np.ascontiguousarray(self.h_mag, dtype=np.float64)
        )
        if self.h_floor <= 0:
            raise ValueError("h_floor must be positive")
        if np.any(self.h_mag < self.h_floor):
            raise ValueError("channel magnitude below the worst-case floor")


@dataclass(frozen=True)
class CommParams:
    """Uplink parameters shared by all devices."""

    noise_power_w: float        # channel noise power p_n
    peak_power_w: float         # peak per-device communication power
    T1_seconds: float           # slot duration
    scalars_per_slot: int       # scalars carried per slot
    h_floor: float = 0.5        # worst-case channel magnitude

    def __post_init__(self):
        if self.noise_power_w < 0:
            raise ValueError("noise power must be nonnegative (0 = noiseless mode)")
        if min(self.peak_power_w, self.T1_seconds) <= 0:
            raise ValueError("communication parameters must be positive")
        if self.scalars_per_slot < 1:
            raise ValueError("scalars_per_slot must be >= 1")
        if self.h_floor <= 0:
            raise ValueError("h_floor must be positive")

    def slots_for(self, dim: int) -> int:
        """Slots needed to upload a dim-dimensional gradient."""
        return math.ceil(dim / self.scalars_per_slot)


@dataclass(frozen=True)
class PowerSchedule:
    """Denoising-factor schedule over a run of total_rounds rounds."""

    scheme: str
    q_param: float
    total_rounds: int

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.q_param <= 0:
            raise ValueError("q_param must be positive")
        if self.total_rounds < 1:
            raise ValueError("total_rounds must be >= 1")


def draw_channel(K: int, h_floor: float, gen: np.random.Generator) -> ChannelRealization:
    """K Rayleigh magnitudes with unit mean-square, lower-truncated at h_floor.

    Inverse-CDF sampling: with E[h^2] = 1 the squared magnitude is Exp(1), so
    a draw truncated below h_floor is sqrt(h_floor^2 - log(1-u)).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if h_floor < 0:
        raise ValueError("h_floor must be nonnegative")
    u = gen.random(K)
    h = np.sqrt(h_floor**2 - np.log1p(-u))
    return ChannelRealization(h, h_floor if h_floor > 0 else np.finfo(float).tiny)


def inversion_power(c_r: float, h_mag: float) -> float:
    """Channel-inversion amplitude scaling sqrt(c_r)/|h|."""
    if c_r <= 0:
        raise ValueError("c_r must be positive")
    return math.sqrt(c_r) / h_mag


def comm_energy(c_r: float, h_mag, t_slots: int, T1_seconds: float):
    """Per-device upload energy t*T1*c_r/|h|^2 for one round."""
    return t_slots * T1_seconds * c_r / np.asarray(h_mag, dtype=np.float64) ** 2


def aggregate(
    local_grads, c_r: float, p_n: float, gen: np.random.Generator
) -> np.ndarray:
    """Over-the-air average of device gradients plus calibrated Gaussian noise.

    Channel inversion makes the aggregation exact apart from additive noise
    with per-coordinate standard deviation sqrt(p_n/c_r); with p_n = 0 the
    output is the bit-exact average and no random numbers are consumed.
    """
    stacked = np.stack([np.asarray(g, dtype=np.float64) for g in local_grads])
    if stacked.ndim != 2:
        raise ValueError("local gradients must be vectors of equal dimension")
    mean = stacked.mean(axis=0)
    if p_n < 0:
        raise ValueError("noise power must be nonnegative")
    if p_n == 0.0:
        return mean
    if c_r <= 0:
        raise ValueError("c_r must be positive")
    return mean + math.sqrt(p_n / c_r) * gen.standard_normal(mean.shape[0])


def schedule_c(schedule: PowerSchedule, r: int, p_n: float) -> float:
    """Denoising factor c_r for round r under a fixed schedule.

    proposed: p_n*sqrt(r)/sqrt(q) (rising), vanilla: p_n*sqrt(R)/sqrt(q)
    (constant), reversed: p_n*sqrt(R-r)/sqrt(q) (falling, floored at
    sqrt(1) in the final round to keep the noise finite).
    """
    if not 1 <= r <= schedule.total_rounds:
        raise ValueError(f"round {r} outside [1, {schedule.total_rounds}]")
    root_q = math.sqrt(schedule.q_param)
    if schedule.scheme == "proposed":
        return p_n * math.sqrt(r) / root_q
    if schedule.scheme == "vanilla":
        return p_n * math.sqrt(schedule.total_rounds) / root_q
    if schedule.scheme == "reversed":
        return p_n * math.sqrt(max(schedule.total_rounds - r, 1)) / root_q
    raise ValueError("the optimal scheme needs the running optimality gap; use optimal_c")


def optimal_c(
    B: float,
    lipschitz_L: float,
    p_n: float,
    eta: float,
    sigma: float,
    gamma_prev: float,
    gamma_floor: float = 1e-12,
) -> float:
    """Closed-form denoising factor minimizing the one-round objective bound.

    c* = sqrt(B * L * p_n^2 * eta^2 / (2 * sigma * gamma)); a vanishing gap
    is clamped to gamma_floor (the schedule saturates near the optimum).
    """
    if min(B, lipschitz_L, p_n, eta, sigma) <= 0:
        raise ValueError("B, L, p_n, eta, sigma must all be positive")
    gamma = max(gamma_prev, gamma_floor)
    return math.sqrt(B * lipschitz_L * p_n**2 * eta**2 / (2.0 * sigma * gamma))


def unit_energy(c_r: float, t_slots: int, T1_seconds: float, p_n: float) -> float:
    """Dimensionless per-round communication cost c_r * t * T1 / p_n."""
    if min(c_r, t_slots, T1_seconds, p_n) <= 0:
        raise ValueError("inputs must be positive")
    return c_r * t_slots * T1_seconds / p_n


def peak_power_ok(c_r: float, h_mag, peak_power_w: float) -> bool:
    """Peak-power feasibility: c_r <= peak * |h_k|^2 for every device."""
    h = np.asarray(h_mag, dtype=np.float64)
    return bool(c_r > 0 and np.all(c_r <= peak_power_w * h**2))
