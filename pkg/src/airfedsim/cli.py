"""Command-line entry point.

Subcommands: ``run`` executes the configured experiment cells and writes one
CSV per (schedule, sensing, repeat) plus a constraint-audit report; ``sweep``
repeats a run over several q values; ``audit`` checks budget feasibility of
a configuration without training; ``selftest`` runs the fast invariant suite.

Exit codes: 0 success, 1 run error (including infeasible budgets), 2 config
error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import rng as rngmod
from .aircomp import PowerSchedule, aggregate, schedule_c
from .budget import feasibility_Q
from .config import ConfigError, ExperimentConfig, RunCell
from .loop import InfeasibleRunError, run_experiment
from .nn import param_count

log = logging.getLogger("airfedsim")


def _load_config(args) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError("missing --config (or use run --print-defaults)")
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return cfgmod.load(path)


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "repeats", None) is not None:
        updates["repeats"] = args.repeats
    if getattr(args, "diagnostics", False):
        updates["diagnostics"] = True
    if getattr(args, "scheme", None) is not None:
        cells = tuple(c for c in cfg.runs if c.schedule == args.scheme)
        if not cells:
            raise ConfigError(f"--scheme {args.scheme}: no matching run cell in config")
        updates["runs"] = cells
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
    return cfgmod.validate(cfg)


def cmd_run(args) -> int:
    if args.print_defaults:
        print(cfgmod.dump_yaml(ExperimentConfig()), end="")
        return 0
    cfg = _apply_overrides(_load_config(args), args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(cfgmod.dump_yaml(cfg))
    try:
        run_experiment(cfg, out_dir=out)
    except InfeasibleRunError as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return 1
    report = (out / "audit_report.txt").read_text()
    if "FAIL" in report:
        print("constraint audit failed; see audit_report.txt", file=sys.stderr)
        return 1
    print(f"wrote {len(list(out.glob('*.csv')))} CSV files to {out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(_load_config(args), args)
    values = [float(v) for v in args.values.split(",")]
    status = 0
    for value in values:
        sub = dataclasses.replace(
            cfg, schedule=dataclasses.replace(cfg.schedule, q_param=value)
        )
        out = Path(args.out) / f"q={value:g}"
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.yaml").write_text(cfgmod.dump_yaml(sub))
        try:
            run_experiment(sub, out_dir=out)
        except InfeasibleRunError as exc:
            print(f"sweep point q={value:g} aborted: {exc}", file=sys.stderr)
            status = 1
    return status


def cmd_audit(args) -> int:
    cfg = _apply_overrides(_load_config(args), args)
    dim = param_count(cfg.arch())
    lines = [f"model dimension: {dim}", f"uplink slots per round: {cfg.comm.slots_for(dim)}"]
    status = 0
    for cell in cfg.runs:
        if cell.schedule == "optimal":
            lines.append(f"{cell.name()}: skipped (denoising factor depends on the run)")
            continue
        schedule = PowerSchedule(cell.schedule, cfg.schedule.q_param, cfg.rounds)
        c = [schedule_c(schedule, r, cfg.comm.noise_power_w)
             for r in range(1, cfg.rounds + 1)]
        q_budget = feasibility_Q(c, cfg.system, cfg.comm, cfg.rounds, dim)
        planned = cfg.rounds * cfg.sensing.b_max
        ok_q = planned <= q_budget
        ok_c3 = all(cr <= cfg.comm.peak_power_w * cfg.comm.h_floor**2 for cr in c)
        lines.append(
            f"{cell.name()}: sample budget Q = {q_budget:.6g}, planned samples = "
            f"{planned} -> {'PASS' if ok_q else 'FAIL'}; worst-case peak power "
            f"{'PASS' if ok_c3 else 'FAIL'}"
        )
        if not (ok_q and ok_c3):
            status = 1
    text = "\n".join(lines)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "feasibility_report.txt").write_text(text + "\n")
    return status


def selftest(noise_std_scale: float = 1.0) -> tuple[bool, list[str]]:
    """Fast invariant suite; returns (all passed, report lines).

    ``noise_std_scale`` deliberately mis-scales the aggregation noise so the
    fault path is testable.
    """
    from . import sensing
    from .nn import ArchSpec, Model, init_model, per_sample_gradients

    lines = []
    ok = True

    def check(name: str, passed: bool, detail: str):
        nonlocal ok
        ok = ok and passed
        lines.append(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")

    # Gradient vs central finite differences.
    arch = ArchSpec((6, 10, 4), "relu", "cross_entropy")
    model = init_model(arch, rngmod.stream(42, "init"))
    probe = rngmod.stream(42, "probe")
    X = probe.standard_normal((8, 6))
    y = probe.integers(0, 4, 8)
    gb = per_sample_gradients(model, (X, y))
    eps = 1e-5
    w = model.weights
    fd = np.empty_like(gb.grads)
    from .nn import per_sample_losses

    for j in range(w.size):
        wp = w.copy(); wp[j] += eps
        wm = w.copy(); wm[j] -= eps
        fd[:, j] = (
            per_sample_losses(Model(arch, wp), (X, y))
            - per_sample_losses(Model(arch, wm), (X, y))
        ) / (2 * eps)
    err = float(np.max(np.abs(fd - gb.grads) / np.maximum(np.abs(fd), 1e-6)))
    check("gradient finite differences", err < 1e-4, f"max rel err {err:.2e}")

    # Resampling unbiasedness (Monte Carlo).
    gen = rngmod.stream(7, "probe")
    grads = gen.standard_normal((8, 5))
    from .nn import GradientBatch

    raw = GradientBatch(grads, np.linalg.norm(grads, axis=1), np.ones(8), 8)
    trials = 20000
    acc = np.zeros(5)
    for _ in range(trials):
        acc += sensing.resample_to(raw, 32, gen).weighted_mean()
    bias = float(np.max(np.abs(acc / trials - grads.mean(axis=0))))
    check("resampling unbiasedness", bias < 0.02, f"max coordinate bias {bias:.4f}")

    # Variance-reduction statistic calibration against exact moments of the
    # scaled unbiased sample variance.
    b, b_bar, n_mc = 16, 32, 20000
    vals = gen.standard_normal((n_mc, b))
    stats = (b / b_bar) * vals.var(axis=1, ddof=1)
    true_mean = b / b_bar
    true_var = (b / b_bar) ** 2 * (3.0 / b - (b - 3) / (b * (b - 1)))
    mean_err = abs(float(stats.mean()) - true_mean) / true_mean
    var_err = abs(float(stats.var()) - true_var) / true_var
    check("variance-reduction statistic moments",
          mean_err < 0.02 and var_err < 0.10,
          f"mean err {mean_err:.3f}, var err {var_err:.3f}")

    # Aggregation noise calibration.
    d = 200000
    zeros = [np.zeros(d)]
    out = aggregate(zeros, 2.0, 2.0, gen)
    out = out * noise_std_scale
    var = float(out.var())
    check("aggregation noise calibration", abs(var - 1.0) < 0.03,
          f"per-coordinate variance {var:.4f} (want 1.0)")

    return ok, lines


def cmd_selftest(args) -> int:
    start = time.perf_counter()
    ok, lines = selftest()
    for line in lines:
        print(line)
    print(f"selftest {'PASS' if ok else 'FAIL'} in {time.perf_counter() - start:.1f}s")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="airfedsim",
        description="Deterministic over-the-air federated SGD simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the configured experiment")
    run.add_argument("--config", help="YAML config path")
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument("--seed", type=int, help="override the master seed")
    run.add_argument("--repeats", type=int, help="override the repeat count")
    run.add_argument("--scheme", help="restrict to run cells with this schedule")
    run.add_argument("--diagnostics", action="store_true",
                     help="append bound-diagnostic CSV columns")
    run.add_argument("--print-defaults", action="store_true",
                     help="print the default config and exit")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run the experiment over several q values")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out", default="sweep")
    sweep.add_argument("--values", required=True, help="comma-separated q values")
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--repeats", type=int)
    sweep.add_argument("--scheme")
    sweep.add_argument("--diagnostics", action="store_true")
    sweep.set_defaults(func=cmd_sweep)

    aud = sub.add_parser("audit", help="budget feasibility check without training")
    aud.add_argument("--config", required=True)
    aud.add_argument("--out", help="optional directory for the report file")
    aud.add_argument("--seed", type=int)
    aud.add_argument("--repeats", type=int)
    aud.add_argument("--scheme")
    aud.set_defaults(func=cmd_audit)

    st = sub.add_parser("selftest", help="fast invariant suite")
    st.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
