import csv
import json

import pytest
from typer.testing import CliRunner

from finsgap.cli import app
from finsgap.core.config import ExperimentConfig
from finsgap.laboratory import EXPERIMENTS, REPORT_NAME, Laboratory, list_experiments, run_config

runner = CliRunner()


def make_eigen_config(**overrides):
    data = {
        "schema_version": 1,
        "experiment": "eigen",
        "seed": 7,
        "model": {"kind": "gaussian_needle", "K": 1.0},
        "grid": {"nodes": [401], "truncation": 8.0},
        "tolerances": {"eigenvalue": 1e-3},
    }
    data.update(overrides)
    return data


def write_config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def load_report(out_dir):
    return json.loads((out_dir / REPORT_NAME).read_text(encoding="utf-8"))


@pytest.fixture
def core_lab(tmp_path):
    config = ExperimentConfig.from_dict({
        "schema_version": 1,
        "experiment": "core-checks",
        "seed": 3,
        "model": {"kind": "euclidean", "K": 1.0, "parameters": {"dim": 2}},
        "options": {"samples": 20, "bochner_samples": 2, "reversibility": 1.0},
    })
    return Laboratory(config, tmp_path / "core")


def test_registry_matches_config_schema():
    assert [e.name for e in list_experiments()] == list(EXPERIMENTS)
    assert EXPERIMENTS["eigen"].theorem == "Spectral gap"
    assert "seed" in EXPERIMENTS["eigen"].required
    assert "options.kind" in EXPERIMENTS["corollary"].required


def test_core_checks_pass(core_lab):
    report = core_lab.run()
    assert report.passed, [c.to_dict() for c in report.checks if not c.passed]
    names = {c.name for c in report.checks}
    assert {"homogeneity", "strong_convexity", "legendre_roundtrip", "dual_norm_of_flat",
            "reversibility_constant", "bochner_residual"} <= names
    assert report.results["reversibility_constant"] == pytest.approx(1.0)
    assert (core_lab.out_dir / "indicatrix.csv").exists()
    assert core_lab.status()["checks"]["failed"] == 0


def test_setup_errors_are_reported(tmp_path):
    config = ExperimentConfig.from_dict({
        "schema_version": 1, "experiment": "core-checks", "model": {"kind": "randers"},
    })
    report = Laboratory(config, tmp_path).run()
    assert report.exit_code == 1
    assert report.error.startswith("ConfigError")
    assert "error" in load_report(tmp_path)


def test_eigen_run_writes_artifacts(tmp_path):
    out = tmp_path / "eigen"
    report = run_config(write_config(tmp_path, make_eigen_config()), out_dir=out)
    assert report.exit_code == 0
    data = load_report(out)
    assert data["passed"] is True
    assert data["config"]["seed"] == 7
    assert data["artifacts"] == ["eigenfield.csv", "rayleigh_history.csv"]
    assert data["results"]["eigen"]["eigenvalue"] == pytest.approx(1.0, abs=1e-3)
    with open(out / "rayleigh_history.csv", newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["iteration", "rayleigh_quotient"]
    assert len(rows) > 2


def test_reports_are_deterministic_apart_from_timing(tmp_path):
    path = write_config(tmp_path, make_eigen_config())
    run_config(path, out_dir=tmp_path / "a")
    run_config(path, out_dir=tmp_path / "b")
    first, second = load_report(tmp_path / "a"), load_report(tmp_path / "b")
    assert set(first["timing"]) == {"generated_at", "wall_time_s"}
    first.pop("timing")
    second.pop("timing")
    assert first == second
    assert (tmp_path / "a" / "eigenfield.csv").read_bytes() == (tmp_path / "b" / "eigenfield.csv").read_bytes()


def test_seed_override_is_echoed(tmp_path):
    out = tmp_path / "seeded"
    run_config(write_config(tmp_path, make_eigen_config()), out_dir=out, seed=12)
    assert load_report(out)["config"]["seed"] == 12


def test_cli_list():
    result = runner.invoke(app, ["list"])
    assert result.exit_code == 0
    for name in EXPERIMENTS:
        assert name in result.output
    assert "Spectral" in result.output


def test_cli_run_passes(tmp_path):
    out = tmp_path / "cli"
    result = runner.invoke(app, ["run", "--config", str(write_config(tmp_path, make_eigen_config())),
                                 "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "PASS" in result.output
    assert (out / REPORT_NAME).exists()


def test_cli_failed_check_exits_2(tmp_path):
    data = make_eigen_config(tolerances={"eigenvalue": 1e-14})
    out = tmp_path / "strict"
    result = runner.invoke(app, ["run", "-c", str(write_config(tmp_path, data)), "-o", str(out)])
    assert result.exit_code == 2
    assert load_report(out)["passed"] is False


def test_cli_rejects_malformed_config(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"schema_version": 1, "experiment": "eigen",', encoding="utf-8")
    out = tmp_path / "never"
    result = runner.invoke(app, ["run", "--config", str(path), "--out", str(out)])
    assert result.exit_code == 1
    assert not out.exists()


def test_cli_rejects_unknown_keys(tmp_path):
    out = tmp_path / "never"
    path = write_config(tmp_path, make_eigen_config(colour="blue"))
    result = runner.invoke(app, ["run", "--config", str(path), "--out", str(out)])
    assert result.exit_code == 1
    assert "colour" in result.output
    assert not out.exists()


def test_cli_seed_completes_a_seedless_config(tmp_path):
    data = make_eigen_config()
    del data["seed"]
    out = tmp_path / "seedless"
    result = runner.invoke(app, ["run", "-c", str(write_config(tmp_path, data)), "-o", str(out),
                                 "--seed", "5"])
    assert result.exit_code == 0, result.output
    assert load_report(out)["config"]["seed"] == 5
