"""Round orchestration for the federated simulation.

One round: every device senses a batch (adaptive controller or fixed size),
computes its importance-corrected mean gradient, the channel aggregates the
device gradients over the air with calibrated noise, and the global model
takes one SGD step on the noisy aggregate.  Rounds are strictly sequential;
within a round all randomness comes from streams keyed by (purpose, repeat,
device, round), so any device-level parallelization cannot change results.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import data, rng as rngmod
from .aircomp import (
    PowerSchedule,
    aggregate,
    comm_energy,
    draw_channel,
    optimal_c,
    peak_power_ok,
    schedule_c,
    unit_energy,
)
from .budget import RoundLedger, audit, round_energy, round_latency
from .config import ExperimentConfig, RunCell, fingerprint
from .metrics import MetricsRecord, validation_loss, write_csv
from .nn import (
    Model,
    apply_update,
    batch_arrays,
    init_model,
    param_count,
    per_sample_gradients,
)
from .sensing import SensingControllerState, adaptive_collect

log = logging.getLogger("airfedsim")


class InfeasibleRunError(RuntimeError):
    """A budget or peak-power constraint failed mid-run."""

    def __init__(self, constraint: str, round_index: int, detail: str):
        self.constraint = constraint
        self.round_index = round_index
        super().__init__(f"{constraint} violated at round {round_index}: {detail}")


@dataclass
class EvalSnapshot:
    """State captured at one evaluation round for bound diagnostics."""

    round_index: int
    weights_before: np.ndarray
    mean_gradient: np.ndarray      # noiseless device-average gradient
    holdout_gradient: np.ndarray   # full-batch gradient on the holdout set
    c_r: float
    tau_r: float
    b_r: int
    grad_norm_sq: float
    holdout_loss_before: float
    holdout_loss_min: float
    holdout_loss_max: float


@dataclass
class RunTrace:
    """Per-round scalars (always cheap) plus optional eval snapshots."""

    b_bar: list[int] = field(default_factory=list)
    b_raw_total: list[int] = field(default_factory=list)
    c: list[float] = field(default_factory=list)
    tau: list[float] = field(default_factory=list)
    grad_variance: list[float] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)  # importance-weighted
    unit_energy: list[float] = field(default_factory=list)
    snapshots: list[EvalSnapshot] = field(default_factory=list)


@dataclass
class RunState:
    """Everything that evolves across rounds of one cell run."""

    round_index: int
    model: Model
    controllers: list[SensingControllerState]
    ledger: RoundLedger
    record: MetricsRecord
    trace: RunTrace
    c_history: list[float]
    channel_history: list[np.ndarray]
    cum_unit_energy: float = 0.0
    cum_raw_samples: int = 0
    gamma: float = 1.0


@dataclass
class CellResult:
    record: MetricsRecord
    ledger: RoundLedger
    c_history: list[float]
    channel_history: list[np.ndarray]
    trace: RunTrace
    final_model: Model


def _holdout_set(cfg: ExperimentConfig, task):
    if cfg.task.kind == "synthetic":
        return data.holdout(task, cfg.holdout_size, cfg.seed)
    X, y = data.load_idx_arrays(cfg.task.test_images, cfg.task.test_labels)
    n = min(cfg.holdout_size, X.shape[0])
    return [data.Sample(X[i], int(y[i])) for i in range(n)]


def _make_task(cfg: ExperimentConfig):
    if cfg.task.kind != "synthetic":
        return None
    return data.make_task(
        cfg.task.class_count,
        cfg.task.feature_dim,
        cfg.task.means_seed,
        noise_std=cfg.task.noise_std,
        label_noise_prob=cfg.task.label_noise_prob,
    )


def _stream_factory(cfg: ExperimentConfig, task, repeat: int):
    if cfg.task.kind == "synthetic":
        def factory(device: int, round_index: int):
            return data.SampleStream(
                task, cfg.seed, device=device, round_index=round_index, repeat=repeat
            )
        return factory
    X, y = data.load_idx_arrays(cfg.task.train_images, cfg.task.train_labels)
    streams = [
        data.IdxStream(X, y, cfg.seed, device=k, repeat=repeat)
        for k in range(cfg.devices)
    ]
    return lambda device, round_index: streams[device]


def _tau_of(cfg: ExperimentConfig, c_r: float) -> float:
    """Per-coordinate variance of the injected aggregate noise."""
    if cfg.comm.noise_power_w == 0.0 or c_r <= 0.0:
        return 0.0
    tau = cfg.comm.noise_power_w / c_r
    if cfg.theory.tau_includes_eta_sq:
        tau *= cfg.eta**2
    return tau


def estimate_gamma(loss: float, f_star: float, gamma_floor: float) -> float:
    """Optimality-gap proxy from the current holdout loss."""
    return max(loss - f_star, gamma_floor)


def run_round(
    cfg: ExperimentConfig,
    cell: RunCell,
    repeat: int,
    state: RunState,
    streams,
    schedule: PowerSchedule,
    dim: int,
    holdout_arrays=None,
    collect_eval_state: bool = False,
) -> RunState:
    """Advance the simulation by one full round (in place)."""
    r = state.round_index + 1
    if r > cfg.rounds:
        raise ValueError(f"round {r} exceeds configured total {cfg.rounds}")
    p_n = cfg.comm.noise_power_w
    t_slots = cfg.comm.slots_for(dim)

    # Denoising factor for this round.
    if cell.schedule == "optimal":
        c_r = optimal_c(
            float(cfg.total_samples_B()),
            cfg.theory.lipschitz_L,
            p_n if p_n > 0 else 1.0,
            cfg.eta,
            cfg.theory.sigma,
            state.gamma,
            cfg.theory.gamma_floor,
        )
    else:
        c_r = schedule_c(schedule, r, p_n)

    # Device phase: sense, compute per-sample gradients, reduce locally.
    local_means = []
    raw_counts = np.empty(cfg.devices, dtype=np.int64)
    var_sum = 0.0
    train_loss_sum = 0.0
    for k in range(cfg.devices):
        stream = streams(k, r)
        if cell.sensing == "reweight":
            gb, state.controllers[k] = adaptive_collect(
                state.model,
                stream,
                state.controllers[k],
                rngmod.stream(cfg.seed, "resample", repeat=repeat, device=k, round_index=r),
            )
        else:
            gb = per_sample_gradients(state.model, stream.draw(cfg.sensing.b_max))
        local_means.append(gb.weighted_mean())
        raw_counts[k] = gb.raw_count
        centered = gb.grads - gb.grads.mean(axis=0)
        var_sum += float(np.mean(np.sum(centered**2, axis=1)))
        train_loss_sum += float((gb.weights * gb.losses).mean())

    # Channel phase: fading draw, peak-power check, over-the-air average.
    channel = draw_channel(
        cfg.devices,
        cfg.comm.h_floor,
        rngmod.stream(cfg.seed, "channel", repeat=repeat, round_index=r),
    )
    if p_n > 0.0 and not peak_power_ok(c_r, channel.h_mag, cfg.comm.peak_power_w):
        raise InfeasibleRunError(
            "C3 peak communication power", r,
            f"c_r = {c_r:.6g} exceeds peak * |h|^2 = "
            f"{cfg.comm.peak_power_w * float(np.min(channel.h_mag))**2:.6g}",
        )
    noisy = aggregate(
        local_means, c_r, p_n,
        rngmod.stream(cfg.seed, "noise", repeat=repeat, round_index=r),
    )

    # Bound diagnostics snapshot (before the weights move).
    if collect_eval_state and (r % cfg.eval_every_rounds == 0 or r == cfg.rounds):
        mean_grad = np.mean(np.stack(local_means), axis=0)
        hg = per_sample_gradients(state.model, holdout_arrays)
        hl = hg.losses
        holdout_grad = hg.grads.mean(axis=0)
        state.trace.snapshots.append(EvalSnapshot(
            round_index=r,
            weights_before=state.model.weights.copy(),
            mean_gradient=mean_grad,
            holdout_gradient=holdout_grad,
            c_r=c_r,
            tau_r=_tau_of(cfg, c_r),
            b_r=cfg.sensing.b_max,
            grad_norm_sq=float(np.sum(holdout_grad**2)),
            holdout_loss_before=float(hl.mean()),
            holdout_loss_min=float(hl.min()),
            holdout_loss_max=float(hl.max()),
        ))

    # Global update.
    state.model = apply_update(state.model, noisy, cfg.eta)

    # Ledger: the round is as slow as its slowest device; energies are
    # per-device because raw counts and channels differ.
    b_worst = int(raw_counts.max())
    t_s, t_cp, t_cm, _ = round_latency(b_worst, cfg.system, cfg.comm, dim)
    e_s = np.empty(cfg.devices)
    e_cp = np.empty(cfg.devices)
    for k in range(cfg.devices):
        e_s[k], e_cp[k], _ = round_energy(
            int(raw_counts[k]), c_r, 1.0, cfg.system, cfg.comm, dim
        )
    e_cm = comm_energy(c_r, channel.h_mag, t_slots, cfg.comm.T1_seconds) if p_n > 0.0 \
        else np.zeros(cfg.devices)
    state.ledger.append(t_s, t_cp, t_cm, e_s, e_cp, e_cm)
    if state.ledger.cum_latency > cfg.system.latency_budget_s:
        raise InfeasibleRunError(
            "C1 total latency", r,
            f"{state.ledger.cum_latency:.6g} s exceeds "
            f"{cfg.system.latency_budget_s:.6g} s",
        )
    if state.ledger.max_device_energy() > cfg.system.energy_budget_j:
        raise InfeasibleRunError(
            "C2 per-device energy", r,
            f"{state.ledger.max_device_energy():.6g} J exceeds "
            f"{cfg.system.energy_budget_j:.6g} J",
        )

    u_r = unit_energy(c_r, t_slots, cfg.comm.T1_seconds, p_n) if p_n > 0.0 else 0.0
    state.cum_unit_energy += u_r
    state.cum_raw_samples += int(raw_counts.sum())
    state.c_history.append(c_r)
    state.channel_history.append(channel.h_mag)
    state.trace.b_bar.append(cfg.sensing.b_max)
    state.trace.b_raw_total.append(int(raw_counts.sum()))
    state.trace.c.append(c_r)
    state.trace.tau.append(_tau_of(cfg, c_r))
    state.trace.grad_variance.append(var_sum / cfg.devices)
    state.trace.train_loss.append(train_loss_sum / cfg.devices)
    state.trace.unit_energy.append(u_r)
    state.round_index = r
    return state


def _evaluate(cfg: ExperimentConfig, state: RunState, holdout_arrays,
              c_r: float, b_raw_round: int):
    loss = validation_loss(state.model, holdout_arrays)
    state.gamma = estimate_gamma(loss, cfg.theory.F_star, cfg.theory.gamma_floor)
    state.record.append(
        round_index=state.round_index,
        validation_loss=loss,
        cumulative_unit_energy=state.cum_unit_energy,
        cumulative_raw_samples=state.cum_raw_samples,
        cum_energy_sensing_j=float(np.sum(state.ledger.cum_e_s)),
        cum_energy_compute_j=float(np.sum(state.ledger.cum_e_cp)),
        cum_energy_comm_j=float(np.sum(state.ledger.cum_e_cm)),
        theta_bar=float(np.mean([c.theta_bar for c in state.controllers])),
        c_r=c_r,
        b_raw=b_raw_round,
    )


def run_cell(
    cfg: ExperimentConfig,
    cell: RunCell,
    repeat: int,
    *,
    collect_eval_state: bool = False,
    streams=None,
) -> CellResult:
    """Run all rounds of one (schedule, sensing) cell for one repeat."""
    arch = cfg.arch()
    dim = param_count(arch)
    task = _make_task(cfg)
    holdout_arrays = batch_arrays(_holdout_set(cfg, task))
    if streams is None:
        streams = _stream_factory(cfg, task, repeat)

    state = RunState(
        round_index=0,
        model=init_model(arch, rngmod.stream(cfg.seed, "init", repeat=repeat)),
        controllers=[
            SensingControllerState(
                theta_bar=cfg.sensing.theta0,
                alpha=cfg.sensing.alpha,
                b_min=cfg.sensing.b_min,
                b_max=cfg.sensing.b_max,
            )
            for _ in range(cfg.devices)
        ],
        ledger=RoundLedger(cfg.devices),
        record=MetricsRecord(
            schedule=cell.schedule,
            sensing=cell.sensing,
            repeat=repeat,
            q_param=cfg.schedule.q_param,
            seed=cfg.seed,
            config_fingerprint=fingerprint(cfg),
        ),
        trace=RunTrace(),
        c_history=[],
        channel_history=[],
    )
    schedule = PowerSchedule(cell.schedule, cfg.schedule.q_param, cfg.rounds)

    _evaluate(cfg, state, holdout_arrays, 0.0, 0)
    for r in range(1, cfg.rounds + 1):
        run_round(cfg, cell, repeat, state, streams, schedule, dim,
                  holdout_arrays=holdout_arrays,
                  collect_eval_state=collect_eval_state)
        if r % cfg.eval_every_rounds == 0 or r == cfg.rounds:
            _evaluate(cfg, state, holdout_arrays, state.c_history[-1],
                      state.trace.b_raw_total[-1])
    return CellResult(state.record, state.ledger, state.c_history,
                      state.channel_history, state.trace, state.model)


def run_experiment(
    cfg: ExperimentConfig,
    cells: tuple[RunCell, ...] | None = None,
    out_dir=None,
) -> dict[tuple[str, str, int], CellResult]:
    """Run every (cell, repeat) and optionally write CSVs plus an audit report.

    Repeats differ only in the repeat component of the RNG keys; all cells of
    one repeat share initial weights, sample draws, fading, and raw noise.
    """
    cells = cfg.runs if cells is None else cells
    results: dict[tuple[str, str, int], CellResult] = {}
    for cell in cells:
        for repeat in range(cfg.repeats):
            log.info("running %s repeat %d/%d", cell.name(), repeat + 1, cfg.repeats)
            results[(cell.schedule, cell.sensing, repeat)] = run_cell(
                cfg, cell, repeat, collect_eval_state=cfg.diagnostics
            )

    if cfg.diagnostics:
        from . import bounds

        first = results[(cells[0].schedule, cells[0].sensing, 0)]
        consts = bounds.estimate_constants(first.trace, cfg.eta, cfg.devices,
                                           cfg.theory.F_star, cfg.theory.gamma_floor)
        for result in results.values():
            bounds.attach_bound_columns(result.record, result.trace, consts,
                                        cfg.eta, cfg.devices, cfg.total_samples_B())

    if out_dir is not None:
        import pathlib

        out = pathlib.Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report_lines = []
        for (sched, sensing, repeat), result in sorted(results.items()):
            name = f"{sched}_{sensing}_rep{repeat}.csv"
            write_csv(result.record, out / name)
            rep = audit(result.ledger, cfg.system, cfg.comm, result.c_history,
                        result.channel_history)
            report_lines.append(f"== {sched}/{sensing} repeat {repeat} ==")
            report_lines.append(rep.format())
            report_lines.append("")
        (out / "audit_report.txt").write_text("\n".join(report_lines))
    return results
