"""Command-line tests: exit codes, determinism of output trees, sweep
file layout, feasibility audit, and the selftest battery."""

import hashlib
from pathlib import Path

import pytest
import yaml

from airfedsim.cli import main, selftest

SMALL_CONFIG = {
    "seed": 7,
    "devices": 2,
    "rounds": 12,
    "repeats": 2,
    "holdout_size": 48,
    "eval_every_rounds": 4,
    "arch_layer_widths": [16, 8, 5],
    "runs": [
        {"schedule": "proposed", "sensing": "baseline"},
        {"schedule": "vanilla", "sensing": "reweight"},
    ],
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(SMALL_CONFIG))
    return path


def tree_digest(root: Path) -> dict[str, str]:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


class TestRun:
    def test_missing_config_is_config_error(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.yaml"),
                     "--out", str(tmp_path / "out")]) == 2

    def test_invalid_field_named_in_error(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text(yaml.safe_dump({**SMALL_CONFIG, "eta": -1.0}))
        assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
        assert "eta" in capsys.readouterr().err

    def test_run_writes_csv_per_cell_repeat(self, config_path, tmp_path):
        out = tmp_path / "out"
        assert main(["run", "--config", str(config_path), "--out", str(out)]) == 0
        csvs = sorted(p.name for p in out.glob("*.csv"))
        assert csvs == [
            "proposed_baseline_rep0.csv", "proposed_baseline_rep1.csv",
            "vanilla_reweight_rep0.csv", "vanilla_reweight_rep1.csv",
        ]
        assert (out / "audit_report.txt").exists()
        assert (out / "config.yaml").exists()

    def test_seed_override_twice_byte_identical(self, config_path, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--config", str(config_path), "--out", str(out1),
                     "--seed", "7"]) == 0
        assert main(["run", "--config", str(config_path), "--out", str(out2),
                     "--seed", "7"]) == 0
        assert tree_digest(out1) == tree_digest(out2)

    def test_scheme_filter(self, config_path, tmp_path):
        out = tmp_path / "out"
        assert main(["run", "--config", str(config_path), "--out", str(out),
                     "--scheme", "vanilla"]) == 0
        names = {p.name for p in out.glob("*.csv")}
        assert names == {"vanilla_reweight_rep0.csv", "vanilla_reweight_rep1.csv"}

    def test_print_defaults_is_loadable(self, capsys):
        assert main(["run", "--print-defaults"]) == 0
        from airfedsim.config import from_dict

        cfg = from_dict(yaml.safe_load(capsys.readouterr().out))
        assert cfg.devices == 5

    def test_infeasible_budget_nonzero_exit(self, tmp_path, capsys):
        raw = dict(SMALL_CONFIG)
        raw["system"] = {
            "T0_seconds": 1e-3, "cycles_per_sample": 1e6, "cpu_hz": 1e9,
            "switched_capacitance": 1e-27, "sensing_power_w": 0.1,
            "sensing_power_min_w": 0.1, "sensing_power_max_w": 1.0,
            "latency_budget_s": 1e-4,  # impossible
            "energy_budget_j": 50000.0,
        }
        path = tmp_path / "tight.yaml"
        path.write_text(yaml.safe_dump(raw))
        assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
        assert "C1" in capsys.readouterr().err


class TestSweep:
    def test_q_values_create_subdirectories(self, config_path, tmp_path):
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", str(config_path), "--out", str(out),
                     "--values", "1,4,16", "--scheme", "proposed"]) == 0
        for q in ("1", "4", "16"):
            files = list((out / f"q={q}").glob("*.csv"))
            assert len(files) == 2  # one scheme x two repeats
            header = files[0].read_text().splitlines()
            assert "q_param" in header[0]
            assert f",{q}.0," in header[1]


class TestAudit:
    def test_feasible_config_passes(self, config_path, capsys):
        assert main(["audit", "--config", str(config_path)]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_infeasible_energy_fails(self, tmp_path, capsys):
        raw = dict(SMALL_CONFIG)
        raw["system"] = {
            "T0_seconds": 1e-3, "cycles_per_sample": 1e6, "cpu_hz": 1e9,
            "switched_capacitance": 1e-27, "sensing_power_w": 0.1,
            "sensing_power_min_w": 0.1, "sensing_power_max_w": 1.0,
            "latency_budget_s": 600.0,
            "energy_budget_j": 1e-6,  # impossible
        }
        path = tmp_path / "tight.yaml"
        path.write_text(yaml.safe_dump(raw))
        assert main(["audit", "--config", str(path)]) == 1
        assert "FAIL" in capsys.readouterr().out


class TestSelftest:
    def test_passes_on_clean_build(self):
        ok, lines = selftest()
        assert ok, "\n".join(lines)

    def test_fails_with_injected_noise_fault(self):
        ok, lines = selftest(noise_std_scale=1.2)
        assert not ok
        assert any("noise" in line and "FAIL" in line for line in lines)

    def test_cli_exit_code(self):
        assert main(["selftest"]) == 0

    def test_runs_fast(self):
        import time

        start = time.perf_counter()
        selftest()
        assert time.perf_counter() - start < 60
