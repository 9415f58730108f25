"""Latency and energy accounting with budget-constraint auditing.

Homogeneous devices: sensing and computation costs are identical across the
fleet, communication energy varies with each device's channel draw.  Runs
are audited against the latency budget (total), the per-device energy budget
(max over devices), and the peak-power limits; violations are reported with
the first offending round, never silently clipped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aircomp import CommParams


@dataclass(frozen=True)
class SystemParams:
    """Device sensing/computation constants and the run budgets."""

    T0_seconds: float            # sampling interval per sensed sample
    cycles_per_sample: float     # CPU cycles to process one sample
    cpu_hz: float                # CPU frequency
    switched_capacitance: float  # effective switched capacitance of the chip
    sensing_power_w: float
    sensing_power_min_w: float
    sensing_power_max_w: float
    latency_budget_s: float      # total-latency budget across the run
    energy_budget_j: float       # per-device energy budget across the run

    def __post_init__(self):
        values = [
            self.T0_seconds, self.cycles_per_sample, self.cpu_hz,
            self.switched_capacitance, self.sensing_power_w,
            self.sensing_power_min_w, self.sensing_power_max_w,
            self.latency_budget_s, self.energy_budget_j,
        ]
        if min(values) <= 0:
            raise ValueError("system parameters must be positive")
        if not self.sensing_power_min_w <= self.sensing_power_w <= self.sensing_power_max_w:
            raise ValueError("sensing power must lie within its min/max limits")

    @property
    def compute_energy_per_sample(self) -> float:
        return self.switched_capacitance * self.cycles_per_sample * self.cpu_hz**2

    @property
    def compute_seconds_per_sample(self) -> float:
        return self.cycles_per_sample / self.cpu_hz


def round_latency(b_r: int, params: SystemParams, comm: CommParams, dim: int):
    """(T_sensing, T_compute, T_comm, T_total) for one round with batch b_r."""
    if b_r < 0:
        raise ValueError("batch size must be nonnegative")
    t_s = params.T0_seconds * b_r
    t_cp = b_r * params.compute_seconds_per_sample
    t_cm = comm.slots_for(dim) * comm.T1_seconds
    return t_s, t_cp, t_cm, t_s + t_cp + t_cm


def round_energy(b_r: int, c_r: float, h_mag, params: SystemParams,
                 comm: CommParams, dim: int):
    """(E_sensing, E_compute, E_comm per device) for one round."""
    if b_r < 0:
        raise ValueError("batch size must be nonnegative")
    e_s = params.T0_seconds * b_r * params.sensing_power_w
    e_cp = params.compute_energy_per_sample * b_r
    t = comm.slots_for(dim)
    e_cm = t * comm.T1_seconds * c_r / np.asarray(h_mag, dtype=np.float64) ** 2
    return e_s, e_cp, e_cm


def feasibility_Q(c_schedule, params: SystemParams, comm: CommParams,
                  rounds: int, dim: int, h_floor: float | None = None) -> float:
    """Total-sample budget Q implied by the latency and energy constraints.

    Q = min( (T_budget - t*R*T1) / (T0 + nu/phi),
             (E_budget - sum_r t*T1*c_r/h_floor^2) / (P_s_min*T0 + kappa*nu*phi^2) )

    evaluated at the worst-case channel magnitude.  A nonpositive numerator
    means the fixed costs already exhaust a budget; Q = 0 flags infeasibility.
    """
    c_schedule = np.asarray(list(c_schedule), dtype=np.float64)
    if c_schedule.shape[0] != rounds:
        raise ValueError("need one c_r per round")
    floor = comm.h_floor if h_floor is None else h_floor
    t = comm.slots_for(dim)

    time_num = params.latency_budget_s - t * rounds * comm.T1_seconds
    time_den = params.T0_seconds + params.compute_seconds_per_sample
    energy_num = params.energy_budget_j - np.sum(
        t * comm.T1_seconds * c_schedule / floor**2
    )
    energy_den = (
        params.sensing_power_min_w * params.T0_seconds
        + params.compute_energy_per_sample
    )
    if time_num <= 0 or energy_num <= 0:
        return 0.0
    return float(min(time_num / time_den, energy_num / energy_den))


@dataclass
class RoundLedger:
    """Per-round latency/energy rows plus running totals (prefix sums).

    Energies are stored per device: under adaptive sensing the devices sense
    different raw-sample counts, and the upload cost depends on each device's
    channel draw.
    """

    devices: int
    t_s: list[float] = field(default_factory=list)
    t_cp: list[float] = field(default_factory=list)
    t_cm: list[float] = field(default_factory=list)
    e_s: list[np.ndarray] = field(default_factory=list)
    e_cp: list[np.ndarray] = field(default_factory=list)
    e_cm: list[np.ndarray] = field(default_factory=list)
    cum_latency: float = 0.0
    cum_e_s: np.ndarray | None = None
    cum_e_cp: np.ndarray | None = None
    cum_e_cm: np.ndarray | None = None

    def __post_init__(self):
        for name in ("cum_e_s", "cum_e_cp", "cum_e_cm"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(self.devices))

    def _as_device_vector(self, value) -> np.ndarray:
        arr = np.asarray(value, dtype=np.float64)
        if arr.ndim == 0:
            arr = np.full(self.devices, float(arr))
        if arr.shape != (self.devices,):
            raise ValueError("energy entries must be scalar or one per device")
        return arr

    def append(self, t_s, t_cp, t_cm, e_s, e_cp, e_cm):
        e_s = self._as_device_vector(e_s)
        e_cp = self._as_device_vector(e_cp)
        e_cm = self._as_device_vector(e_cm)
        self.t_s.append(float(t_s))
        self.t_cp.append(float(t_cp))
        self.t_cm.append(float(t_cm))
        self.e_s.append(e_s)
        self.e_cp.append(e_cp)
        self.e_cm.append(e_cm)
        self.cum_latency += t_s + t_cp + t_cm
        self.cum_e_s = self.cum_e_s + e_s
        self.cum_e_cp = self.cum_e_cp + e_cp
        self.cum_e_cm = self.cum_e_cm + e_cm

    @property
    def rounds(self) -> int:
        return len(self.t_s)

    def max_device_energy(self) -> float:
        """Worst per-device cumulative energy (sensing + compute + upload)."""
        if self.rounds == 0:
            return 0.0
        return float(np.max(self.cum_e_s + self.cum_e_cp + self.cum_e_cm))


@dataclass
class ConstraintCheck:
    name: str
    passed: bool
    first_violation_round: int | None = None
    detail: str = ""


@dataclass
class AuditReport:
    checks: list[ConstraintCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def format(self) -> str:
        lines = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            where = "" if c.first_violation_round is None else f" (round {c.first_violation_round})"
            lines.append(f"[{status}] {c.name}{where}: {c.detail}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def audit(
    ledger: RoundLedger,
    params: SystemParams,
    comm: CommParams,
    c_schedule,
    channel_history,
) -> AuditReport:
    """Check C1 (total latency), C2 (per-device energy), C3/C4 (peak powers)."""
    checks = []
    rounds = ledger.rounds

    # C1: total latency within budget; report the first round whose prefix
    # sum exceeds it.
    latencies = np.array(ledger.t_s) + np.array(ledger.t_cp) + np.array(ledger.t_cm)
    prefix = np.cumsum(latencies) if rounds else np.array([])
    total_latency = float(prefix[-1]) if rounds else 0.0
    if total_latency <= params.latency_budget_s:
        checks.append(ConstraintCheck(
            "C1 total latency", True,
            detail=f"{total_latency:.6g} s of {params.latency_budget_s:.6g} s",
        ))
    else:
        first = int(np.argmax(prefix > params.latency_budget_s)) + 1
        checks.append(ConstraintCheck(
            "C1 total latency", False, first,
            f"{total_latency:.6g} s exceeds budget {params.latency_budget_s:.6g} s",
        ))

    # C2: worst-device cumulative energy; first round where any device's
    # prefix exceeds the budget.
    if rounds:
        per_round = np.stack(ledger.e_s) + np.stack(ledger.e_cp) + np.stack(ledger.e_cm)
        device_prefix = np.cumsum(per_round, axis=0)
        worst = float(device_prefix[-1].max())
    else:
        device_prefix = np.zeros((0, ledger.devices))
        worst = 0.0
    if worst <= params.energy_budget_j:
        checks.append(ConstraintCheck(
            "C2 per-device energy", True,
            detail=f"{worst:.6g} J of {params.energy_budget_j:.6g} J (worst device)",
        ))
    else:
        over = np.any(device_prefix > params.energy_budget_j, axis=1)
        checks.append(ConstraintCheck(
            "C2 per-device energy", False, int(np.argmax(over)) + 1,
            f"{worst:.6g} J exceeds budget {params.energy_budget_j:.6g} J",
        ))

    # C3: 0 < c_r <= peak_power * |h_k|^2 for every device, every round.
    c3_first = None
    for r, (c_r, h) in enumerate(zip(c_schedule, channel_history), start=1):
        h = np.asarray(h, dtype=np.float64)
        if c_r <= 0 or np.any(c_r > comm.peak_power_w * h**2):
            c3_first = r
            break
    checks.append(ConstraintCheck(
        "C3 peak communication power", c3_first is None, c3_first,
        "c_r within peak * |h|^2 every round" if c3_first is None
        else "denoising factor exceeds the peak-power envelope",
    ))

    # C4: static sensing-power limits.
    c4_ok = params.sensing_power_min_w <= params.sensing_power_w <= params.sensing_power_max_w
    checks.append(ConstraintCheck(
        "C4 sensing power limits", c4_ok,
        detail=f"p_s = {params.sensing_power_w:.6g} W in "
        f"[{params.sensing_power_min_w:.6g}, {params.sensing_power_max_w:.6g}]",
    ))
    return AuditReport(checks)
