"""Validation-loss measurement, smoothing, crossing costs, and CSV emission.

The CSV schema is stable and documented in the README: a header row of fixed
column order, one row per evaluation point, every float written with full
round-trippable precision.  One file per (schedule, sensing, repeat) cell.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .nn import Model, per_sample_losses

SCHEMA_VERSION = 1

BASE_COLUMNS = [
    "schema_version",
    "config_fingerprint",
    "schedule",
    "sensing",
    "repeat",
    "q_param",
    "seed",
    "round",
    "validation_loss",
    "cumulative_unit_energy",
    "cumulative_raw_samples",
    "cum_energy_sensing_j",
    "cum_energy_compute_j",
    "cum_energy_comm_j",
    "theta_bar",
    "c_r",
    "b_raw",
]


@dataclass
class MetricsRecord:
    """Per-evaluation-point time series for one run cell."""

    schedule: str
    sensing: str
    repeat: int
    q_param: float
    seed: int
    config_fingerprint: str = ""
    rounds: list[int] = field(default_factory=list)
    validation_loss: list[float] = field(default_factory=list)
    cumulative_unit_energy: list[float] = field(default_factory=list)
    cumulative_raw_samples: list[int] = field(default_factory=list)
    cum_energy_sensing_j: list[float] = field(default_factory=list)
    cum_energy_compute_j: list[float] = field(default_factory=list)
    cum_energy_comm_j: list[float] = field(default_factory=list)
    theta_bar: list[float] = field(default_factory=list)
    c_r: list[float] = field(default_factory=list)
    b_raw: list[int] = field(default_factory=list)
    extra: dict[str, list[float]] = field(default_factory=dict)

    def append(self, *, round_index, validation_loss, cumulative_unit_energy,
               cumulative_raw_samples, cum_energy_sensing_j, cum_energy_compute_j,
               cum_energy_comm_j, theta_bar, c_r, b_raw, **extra):
        if self.rounds and round_index <= self.rounds[-1]:
            raise ValueError("evaluation rounds must be strictly increasing")
        self.rounds.append(int(round_index))
        self.validation_loss.append(float(validation_loss))
        self.cumulative_unit_energy.append(float(cumulative_unit_energy))
        self.cumulative_raw_samples.append(int(cumulative_raw_samples))
        self.cum_energy_sensing_j.append(float(cum_energy_sensing_j))
        self.cum_energy_compute_j.append(float(cum_energy_compute_j))
        self.cum_energy_comm_j.append(float(cum_energy_comm_j))
        self.theta_bar.append(float(theta_bar))
        self.c_r.append(float(c_r))
        self.b_raw.append(int(b_raw))
        for key, value in extra.items():
            self.extra.setdefault(key, []).append(float(value))

    def __len__(self) -> int:
        return len(self.rounds)


def validation_loss(model: Model, holdout) -> float:
    """Mean per-sample loss over the holdout set."""
    if len(holdout) == 0:
        raise ValueError("holdout must be nonempty")
    return float(per_sample_losses(model, holdout).mean())


def smooth(series, window: int = 100) -> np.ndarray:
    """Causal moving average with linearly decaying weights, newest heaviest.

    The lag-k weight is (window - k); at the start of the series the kernel
    is renormalized over the samples actually covered, so a constant series
    is a fixed point and the impulse response sums to one at every index.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.size == 0:
        raise ValueError("cannot smooth an empty series")
    if window < 1:
        raise ValueError("window must be >= 1")
    out = np.empty_like(series)
    kernel = np.arange(window, 0, -1, dtype=np.float64)  # lag 0 .. window-1
    for i in range(series.size):
        k = min(i + 1, window)
        w = kernel[:k]
        out[i] = np.dot(w, series[i - k + 1 : i + 1][::-1]) / w.sum()
    return out


@dataclass(frozen=True)
class CrossingCost:
    """Cumulative costs at the first smoothed-loss crossing of a target."""

    crossed: bool
    round_index: int | None = None
    unit_energy: float | None = None
    raw_samples: int | None = None


def crossing_cost(record: MetricsRecord, target_loss: float,
                  window: int = 100) -> CrossingCost:
    """Costs at the first eval point whose smoothed loss is <= target."""
    if len(record) == 0:
        raise ValueError("empty record")
    smoothed = smooth(record.validation_loss, window)
    below = np.nonzero(smoothed <= target_loss)[0]
    if below.size == 0:
        return CrossingCost(False)
    i = int(below[0])
    return CrossingCost(
        True,
        round_index=record.rounds[i],
        unit_energy=record.cumulative_unit_energy[i],
        raw_samples=record.cumulative_raw_samples[i],
    )


def _format(value) -> str:
    # repr() of a Python float round-trips bit-exactly; ints stay ints.
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(record: MetricsRecord, path) -> None:
    """Write one record to CSV: header plus one row per evaluation point."""
    extra_cols = sorted(record.extra)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BASE_COLUMNS + extra_cols)
        for i in range(len(record)):
            row = [
                SCHEMA_VERSION,
                record.config_fingerprint,
                record.schedule,
                record.sensing,
                record.repeat,
                _format(record.q_param),
                record.seed,
                record.rounds[i],
                _format(record.validation_loss[i]),
                _format(record.cumulative_unit_energy[i]),
                record.cumulative_raw_samples[i],
                _format(record.cum_energy_sensing_j[i]),
                _format(record.cum_energy_compute_j[i]),
                _format(record.cum_energy_comm_j[i]),
                _format(record.theta_bar[i]),
                _format(record.c_r[i]),
                record.b_raw[i],
            ]
            row.extend(_format(record.extra[c][i]) for c in extra_cols)
            writer.writerow(row)


def read_csv(path) -> MetricsRecord:
    """Parse a CSV produced by write_csv back into a MetricsRecord."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if header[: len(BASE_COLUMNS)] != BASE_COLUMNS:
        raise ValueError(f"{path}: unexpected CSV schema {header[:4]}...")
    extra_cols = header[len(BASE_COLUMNS):]
    if not rows:
        return MetricsRecord("", "", 0, 0.0, 0)
    first = rows[0]
    record = MetricsRecord(
        schedule=first[2],
        sensing=first[3],
        repeat=int(first[4]),
        q_param=float(first[5]),
        seed=int(first[6]),
        config_fingerprint=first[1],
    )
    for row in rows:
        record.rounds.append(int(row[7]))
        record.validation_loss.append(float(row[8]))
        record.cumulative_unit_energy.append(float(row[9]))
        record.cumulative_raw_samples.append(int(row[10]))
        record.cum_energy_sensing_j.append(float(row[11]))
        record.cum_energy_compute_j.append(float(row[12]))
        record.cum_energy_comm_j.append(float(row[13]))
        record.theta_bar.append(float(row[14]))
        record.c_r.append(float(row[15]))
        record.b_raw.append(int(row[16]))
        for j, col in enumerate(extra_cols):
            record.extra.setdefault(col, []).append(float(row[len(BASE_COLUMNS) + j]))
    return record
