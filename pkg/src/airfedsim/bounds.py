"""Analytic bound diagnostics computed on simulated traces.

The descent, variance, generalization, and one-round objective bounds are
evaluated numerically with constants estimated from a calibration run.  The
checks are statistical: the inequalities hold in expectation over data and
channel noise, so they are verified as fractions over rounds rather than
asserted per round.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .metrics import MetricsRecord
from .nn import Model, per_sample_losses


@dataclass(frozen=True)
class TheoryConstants:
    """Empirical stand-ins for the smoothness/moment constants of the analysis."""

    lipschitz_L: float
    delta: float        # gradient-dominance constant
    mu_F: float         # alignment of mean sample gradient with the true gradient
    mu_G: float         # alignment relative to the mean-square gradient level
    M_e: float
    M_v: float
    M_E: float
    M_V: float
    sigma: float        # sub-Gaussian scale of the per-sample loss
    F_star: float
    B: float            # per-device total sample budget

    def __post_init__(self):
        for name in ("lipschitz_L", "delta", "mu_F", "mu_G", "M_e", "M_v",
                     "M_E", "M_V", "sigma", "B"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def estimate_constants(trace, eta: float, K: int, f_star: float = 0.0,
                       gamma_floor: float = 1e-9) -> TheoryConstants:
    """Estimate the bound constants from a traced calibration run.

    Smoothness from the steepest gradient change between consecutive
    snapshots; gradient dominance from the smallest norm-to-gap ratio; moment
    limits as envelope lines over (||grad F||^2, moment) pairs; sigma from
    half the per-sample loss range.
    """
    snaps = trace.snapshots
    if len(snaps) < 3:
        raise ValueError("need at least 3 evaluation snapshots to estimate constants")

    lipschitz = 0.0
    for prev, cur in zip(snaps[:-1], snaps[1:]):
        dw = float(np.linalg.norm(cur.weights_before - prev.weights_before))
        if dw > 0:
            dg = float(np.linalg.norm(cur.holdout_gradient - prev.holdout_gradient))
            lipschitz = max(lipschitz, dg / dw)

    x = np.array([s.grad_norm_sq for s in snaps])
    gaps = np.array([max(s.holdout_loss_before - f_star, gamma_floor) for s in snaps])
    delta = float(np.min(x / (2.0 * gaps)))

    dots = np.array([
        float(np.dot(s.mean_gradient, s.mean_gradient)) for s in snaps
    ])
    inner = np.array([
        float(np.dot(s.holdout_gradient, s.mean_gradient)) for s in snaps
    ])
    mu_f = float(np.clip(np.min(inner / np.maximum(x, 1e-300)), 1e-3, 1.0))
    mu_g = float(np.clip(np.min(inner / np.maximum(dots, 1e-300)), 1e-3, 1.0))

    def envelope(y: np.ndarray) -> tuple[float, float]:
        # Slope from least squares (clamped nonnegative), offset lifted so the
        # line upper-bounds every observed point.
        if np.ptp(x) > 0:
            slope = float(np.polyfit(x, y, 1)[0])
        else:
            slope = 0.0
        slope = max(slope, 0.0)
        offset = float(np.max(y - slope * x))
        return max(offset, 0.0), slope

    variances = np.array([
        trace.grad_variance[s.round_index - 1] for s in snaps
    ])
    m_v, m_V = envelope(variances)
    m_e, m_E = envelope(dots)

    lo = min(s.holdout_loss_min for s in snaps)
    hi = max(s.holdout_loss_max for s in snaps)
    sigma = (hi - lo) / 2.0

    return TheoryConstants(
        lipschitz_L=lipschitz,
        delta=delta,
        mu_F=mu_f,
        mu_G=mu_g,
        M_e=m_e,
        M_v=m_v,
        M_E=m_E,
        M_V=m_V,
        sigma=max(sigma, 1e-12),
        F_star=f_star,
        B=float(sum(trace.b_bar)),
    )


def eta_cap(consts: TheoryConstants, K: int, b_r: int) -> float:
    """Largest step size under which the descent bound is claimed."""
    denom = consts.lipschitz_L * (consts.M_E + consts.M_V / (K * b_r))
    return np.inf if denom <= 0 else consts.mu_F / denom


def loss_descent_bound(grad_norm_sq: float, tau_r: float, b_r: int,
                       consts: TheoryConstants, eta: float, K: int) -> float:
    """Expected one-round loss change bound in terms of the gradient norm."""
    cap = eta_cap(consts, K, b_r)
    if eta > cap:
        warnings.warn(
            f"step size {eta:.3g} exceeds the descent-bound cap {cap:.3g}; "
            "descent checks are unverified", RuntimeWarning, stacklevel=2,
        )
    return (
        -(eta * consts.mu_F / 2.0) * grad_norm_sq
        + consts.lipschitz_L * tau_r * eta**2 / (2.0 * K)
        + (consts.lipschitz_L * eta**2 / 2.0)
        * (consts.M_e + consts.M_v / (K * b_r))
    )


def var_descent_bound(grad_variance: float, tau_r: float,
                      consts: TheoryConstants, eta: float, K: int) -> float:
    """Expected one-round loss change bound in terms of gradient variance."""
    return (
        -(eta * consts.mu_G / 2.0) * grad_variance
        + consts.lipschitz_L * tau_r * eta**2 / (2.0 * K)
    )


def gen_error_bound(variance_history, tau_history, b_history,
                    consts: TheoryConstants, eta: float, K: int,
                    B: float) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative generalization-error bound and its per-round increments.

    increment_r = (sigma * eta / (K * B)) * sqrt(V_r / (K * tau_r * b_r));
    a noiseless round (tau = 0) makes the increment infinite.
    """
    v = np.asarray(variance_history, dtype=np.float64)
    tau = np.asarray(tau_history, dtype=np.float64)
    b = np.asarray(b_history, dtype=np.float64)
    if not (v.shape == tau.shape == b.shape):
        raise ValueError("histories must be aligned")
    with np.errstate(divide="ignore"):
        inner = np.where(tau > 0, v / (K * np.where(tau > 0, tau, 1.0) * b), np.inf)
    increments = (consts.sigma * eta / (K * B)) * np.sqrt(inner)
    return np.cumsum(increments), increments


def j_bar(c_r: float, b_r: int, gamma_prev: float, consts: TheoryConstants,
          eta: float, K: int, p_n: float, B: float) -> float:
    """One-round objective upper bound as a function of the denoising factor."""
    if min(c_r, b_r, gamma_prev, p_n, B) <= 0:
        raise ValueError("c_r, b_r, gamma_prev, p_n, B must be positive")
    L = consts.lipschitz_L
    const_term = (
        L * consts.M_e * eta**2 / 2.0
        + consts.sigma * eta / (2.0 * B * K**2 * consts.mu_G)
        + L * consts.sigma * eta**2 / (2.0 * B * K**2)
    )
    return (
        -consts.delta * eta * consts.mu_F * gamma_prev
        + L * p_n * eta**2 / (2.0 * K * c_r)
        + L * consts.M_v * eta**2 / (2.0 * K * b_r)
        + gamma_prev * consts.sigma * c_r / (B * K * p_n)
        + const_term
    )


def attach_bound_columns(record: MetricsRecord, trace, consts: TheoryConstants,
                         eta: float, K: int, B: float) -> None:
    """Append per-eval-point bound values as extra CSV columns."""
    cum, _ = gen_error_bound(trace.grad_variance, trace.tau, trace.b_bar,
                             consts, eta, K, B)
    descent = {}
    for snap in trace.snapshots:
        descent[snap.round_index] = loss_descent_bound(
            snap.grad_norm_sq, snap.tau_r, snap.b_r, consts, eta, K
        )
    for r in record.rounds:
        record.extra.setdefault("gen_bound_cum", []).append(
            float(cum[r - 1]) if r >= 1 else 0.0
        )
        record.extra.setdefault("descent_bound", []).append(
            descent.get(r, float("nan"))
        )
    # Keep the record rectangular if it was appended to before attach.
    for col in ("gen_bound_cum", "descent_bound"):
        if len(record.extra[col]) != len(record.rounds):
            raise ValueError("bound columns misaligned with evaluation points")


def generalization_gap_report(record: MetricsRecord, trace,
                              consts: TheoryConstants, eta: float, K: int,
                              B: float) -> list[tuple[int, float, float]]:
    """Per-eval-point comparison of |holdout loss - weighted training loss|
    against the cumulative generalization bound.

    Returns (round, measured gap, bound) rows for reporting; the bound holds
    in expectation, so callers report violations rather than asserting them.
    """
    cum, _ = gen_error_bound(trace.grad_variance, trace.tau, trace.b_bar,
                             consts, eta, K, B)
    rows = []
    for i, r in enumerate(record.rounds):
        if r < 1:
            continue
        gap = abs(record.validation_loss[i] - trace.train_loss[r - 1])
        rows.append((r, float(gap), float(cum[r - 1])))
    return rows


def descent_replay_check(trace, holdout, arch, consts: TheoryConstants,
                         eta: float, K: int, gen: np.random.Generator,
                         draws: int = 50) -> tuple[float, list[tuple[int, float, float]]]:
    """Fraction of eval rounds whose replayed mean descent obeys the bound.

    At each snapshot the update is replayed ``draws`` times with fresh noise;
    the averaged realized loss change is compared against the bound evaluated
    with the estimated constants.
    """
    rows = []
    ok = 0
    for snap in trace.snapshots:
        model = Model(arch, snap.weights_before)
        base = snap.holdout_loss_before
        deltas = []
        for _ in range(draws):
            noise = (
                np.sqrt(snap.tau_r) * gen.standard_normal(snap.weights_before.shape[0])
                if snap.tau_r > 0 else 0.0
            )
            stepped = Model(arch, snap.weights_before - eta * (snap.mean_gradient + noise))
            deltas.append(float(per_sample_losses(stepped, holdout).mean()) - base)
        realized = float(np.mean(deltas))
        bound = loss_descent_bound(snap.grad_norm_sq, snap.tau_r, snap.b_r,
                                   consts, eta, K)
        rows.append((snap.round_index, realized, bound))
        ok += realized <= bound
    return ok / len(rows), rows
