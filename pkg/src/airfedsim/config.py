"""Experiment configuration: schema, defaults, validation, fingerprinting.

Configs are YAML with explicit units in field names.  Validation happens
before any computation and error messages name the offending field.  The
fingerprint hashes everything except the per-cell overlays (schedule,
sensing, repeat), so all CSVs of one experiment share it.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field

import yaml

from .aircomp import SCHEMES, CommParams
from .budget import SystemParams
from .nn import ACTIVATIONS, LOSSES, ArchSpec

SENSING_MODES = ("baseline", "reweight")
SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass(frozen=True)
class TaskConfig:
    kind: str = "synthetic"           # "synthetic" | "idx"
    class_count: int = 5
    feature_dim: int = 16
    noise_std: float = 0.6
    label_noise_prob: float = 0.0
    means_seed: int = 9               # geometry seed, shared by every run cell
    train_images: str | None = None   # idx-kind paths
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None


@dataclass(frozen=True)
class SensingConfig:
    alpha: float = 0.1
    b_min: int = 4
    b_max: int = 32
    theta0: float = 0.0


@dataclass(frozen=True)
class ScheduleConfig:
    q_param: float = 4.0


@dataclass(frozen=True)
class TheoryConfig:
    sigma: float = 1.0
    lipschitz_L: float = 10.0
    F_star: float = 0.0
    gamma_floor: float = 1e-9
    total_samples_B: int | None = None  # defaults to rounds * b_max
    tau_includes_eta_sq: bool = False   # alternative noise-variance bookkeeping


@dataclass(frozen=True)
class RunCell:
    schedule: str = "proposed"
    sensing: str = "baseline"

    def name(self) -> str:
        return f"{self.schedule}-{self.sensing}"


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 42
    devices: int = 5
    rounds: int = 2000
    repeats: int = 5
    eta: float = 0.01
    eval_every_rounds: int = 10
    holdout_size: int = 512
    arch_layer_widths: tuple[int, ...] = (16, 24, 5)
    arch_activation: str = "relu"
    arch_loss: str = "cross_entropy"
    task: TaskConfig = field(default_factory=TaskConfig)
    sensing: SensingConfig = field(default_factory=SensingConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    comm: CommParams = field(default_factory=lambda: CommParams(
        noise_power_w=1.0,
        peak_power_w=1.0e4,
        T1_seconds=1.0e-3,
        scalars_per_slot=100,
        h_floor=0.5,
    ))
    system: SystemParams = field(default_factory=lambda: SystemParams(
        T0_seconds=1.0e-3,
        cycles_per_sample=1.0e6,
        cpu_hz=1.0e9,
        switched_capacitance=1.0e-27,
        sensing_power_w=0.1,
        sensing_power_min_w=0.1,
        sensing_power_max_w=1.0,
        latency_budget_s=600.0,
        energy_budget_j=50000.0,
    ))
    theory: TheoryConfig = field(default_factory=TheoryConfig)
    runs: tuple[RunCell, ...] = (
        RunCell("proposed", "baseline"),
        RunCell("vanilla", "baseline"),
        RunCell("reversed", "baseline"),
        RunCell("proposed", "reweight"),
    )
    diagnostics: bool = False

    def arch(self) -> ArchSpec:
        return ArchSpec(self.arch_layer_widths, self.arch_activation, self.arch_loss)

    def total_samples_B(self) -> int:
        if self.theory.total_samples_B is not None:
            return self.theory.total_samples_B
        return self.rounds * self.sensing.b_max


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    _require(cfg.devices >= 1, "devices must be >= 1")
    _require(cfg.rounds >= 1, "rounds must be >= 1")
    _require(cfg.repeats >= 1, "repeats must be >= 1")
    _require(cfg.eta > 0, "eta must be positive")
    _require(cfg.eval_every_rounds >= 1, "eval_every_rounds must be >= 1")
    _require(cfg.holdout_size >= 1, "holdout_size must be >= 1")
    _require(len(cfg.arch_layer_widths) >= 2, "arch.layer_widths needs >= 2 layers")
    _require(all(w >= 1 for w in cfg.arch_layer_widths),
             "arch.layer_widths entries must be positive")
    _require(cfg.arch_activation in ACTIVATIONS,
             f"arch.activation must be one of {ACTIVATIONS}")
    _require(cfg.arch_loss in LOSSES, f"arch.loss must be one of {LOSSES}")
    _require(cfg.task.kind in ("synthetic", "idx"),
             "task.kind must be 'synthetic' or 'idx'")
    if cfg.task.kind == "synthetic":
        _require(cfg.task.class_count >= 2, "task.class_count must be >= 2")
        _require(cfg.task.feature_dim >= 1, "task.feature_dim must be >= 1")
        _require(cfg.task.noise_std > 0, "task.noise_std must be positive")
        _require(0 <= cfg.task.label_noise_prob < 1,
                 "task.label_noise_prob must lie in [0, 1)")
        _require(cfg.arch_layer_widths[0] == cfg.task.feature_dim,
                 "arch input width must equal task.feature_dim")
        _require(cfg.arch_layer_widths[-1] == cfg.task.class_count,
                 "arch output width must equal task.class_count")
    else:
        for attr in ("train_images", "train_labels", "test_images", "test_labels"):
            _require(getattr(cfg.task, attr) is not None,
                     f"task.{attr} is required for idx tasks")
    _require(0 <= cfg.sensing.alpha <= 1, "sensing.alpha must lie in [0, 1]")
    _require(1 <= cfg.sensing.b_min <= cfg.sensing.b_max,
             "sensing must satisfy 1 <= b_min <= b_max")
    _require(cfg.sensing.theta0 >= 0, "sensing.theta0 must be nonnegative")
    _require(cfg.schedule.q_param > 0, "schedule.q_param must be positive")
    _require(cfg.theory.sigma > 0, "theory.sigma must be positive")
    _require(cfg.theory.lipschitz_L > 0, "theory.lipschitz_L must be positive")
    _require(cfg.theory.gamma_floor > 0, "theory.gamma_floor must be positive")
    _require(len(cfg.runs) >= 1, "runs must list at least one cell")
    for cell in cfg.runs:
        _require(cell.schedule in SCHEMES, f"runs: unknown schedule {cell.schedule!r}")
        _require(cell.sensing in SENSING_MODES,
                 f"runs: unknown sensing mode {cell.sensing!r}")
    # CommParams / SystemParams already validate positivity in __post_init__.
    return cfg


def to_dict(cfg: ExperimentConfig) -> dict:
    out = asdict(cfg)
    out["schema_version"] = SCHEMA_VERSION
    out["arch_layer_widths"] = list(cfg.arch_layer_widths)
    out["runs"] = [{"schedule": c.schedule, "sensing": c.sensing} for c in cfg.runs]
    return out


def _build(section: dict, cls, path: str):
    try:
        return cls(**section)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def from_dict(raw: dict) -> ExperimentConfig:
    raw = copy.deepcopy(raw)
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    version = raw.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version {version} unsupported (have {SCHEMA_VERSION})")

    kwargs = {}
    nested = {
        "task": TaskConfig,
        "sensing": SensingConfig,
        "schedule": ScheduleConfig,
        "comm": CommParams,
        "system": SystemParams,
        "theory": TheoryConfig,
    }
    for key, value in raw.items():
        if key in nested:
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: must be a mapping")
            kwargs[key] = _build(value, nested[key], key)
        elif key == "runs":
            if not isinstance(value, list):
                raise ConfigError("runs: must be a list of {schedule, sensing} cells")
            kwargs["runs"] = tuple(
                _build(cell, RunCell, f"runs[{i}]") for i, cell in enumerate(value)
            )
        elif key == "arch_layer_widths":
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    cfg = _build(kwargs, ExperimentConfig, "config")
    return validate(cfg)


def load(path) -> ExperimentConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raw = {}
    return from_dict(raw)


def dump_yaml(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def fingerprint(cfg: ExperimentConfig) -> str:
    """Digest over everything shared by the cells of one experiment."""
    core = to_dict(cfg)
    core.pop("runs", None)
    payload = json.dumps(core, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]
