import json
import math

import pytest

from finsgap.core.config import ExperimentConfig, parse_config, validate_config
from finsgap.core.errors import ConfigError
from finsgap.core.validator import Check, CheckLedger, RunReport


def make_config(**overrides):
    data = {
        "schema_version": 1,
        "experiment": "eigen",
        "seed": 7,
        "model": {"kind": "gaussian_needle", "K": 1.0, "parameters": {"center": 0.0}},
        "grid": {"nodes": [401], "truncation": 8.0},
        "tolerances": {"eigenvalue": 1e-3},
        "output": "runs/eigen",
    }
    data.update(overrides)
    return data


def field_of(data):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict(data)
    return info.value.field


def test_valid_config():
    cfg = ExperimentConfig.from_dict(make_config())
    assert cfg.experiment == "eigen"
    assert cfg.model.kind == "gaussian_needle"
    assert cfg.grid.nodes == (401,)
    assert cfg.seed == 7
    assert cfg.tolerance("eigenvalue", 1.0) == 1e-3
    assert cfg.tolerance("splitting", 1e-2) == 1e-2


def test_config_echo_reparses():
    cfg = ExperimentConfig.from_dict(make_config())
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


def test_unknown_keys_are_rejected():
    assert field_of(make_config(colour="blue")) == "colour"
    model = {"kind": "gaussian_needle", "curvature": 1.0}
    assert field_of(make_config(model=model)) == "model.curvature"
    model = {"kind": "gaussian_needle", "parameters": {"s": 0.1}}
    assert field_of(make_config(model=model)) == "model.parameters.s"


def test_missing_required_keys():
    data = make_config()
    del data["model"]
    assert field_of(data) == "model"
    assert field_of(make_config(model={"K": 1.0})) == "model.kind"


def test_schema_version():
    assert field_of(make_config(schema_version=2)) == "schema_version"


def test_eigen_needs_a_seed():
    data = make_config()
    del data["seed"]
    assert field_of(data) == "seed"
    assert field_of(make_config(seed=-1)) == "seed"
    assert field_of(make_config(seed=2 ** 64)) == "seed"


def test_seed_override():
    assert parse_config(json.dumps(make_config()), seed=11).seed == 11
    assert parse_config(json.dumps(make_config())).seed == 7
    data = make_config()
    del data["seed"]
    assert parse_config(json.dumps(data), seed=5).seed == 5
    with pytest.raises(ConfigError):
        parse_config(json.dumps(data))


def test_model_must_fit_experiment():
    model = {"kind": "euclidean", "parameters": {"dim": 2}}
    assert field_of(make_config(model=model)) == "model.kind"
    assert field_of(make_config(experiment="tomography")) == "experiment"


def test_value_validation():
    assert field_of(make_config(model={"kind": "gaussian_needle", "K": -1.0})) == "model.K"
    assert field_of(make_config(grid={"nodes": [2]})) == "grid.nodes[0]"
    assert field_of(make_config(tolerances={"eigenvalue": "tight"})) == "tolerances.eigenvalue"
    randers = {"schema_version": 1, "experiment": "core-checks",
               "model": {"kind": "randers", "parameters": {"b": [0.5, "x"]}}}
    assert field_of(randers) == "model.parameters.b[1]"
    box = {"schema_version": 1, "experiment": "core-checks",
           "model": {"kind": "euclidean", "domain": [[1.0, 0.0]]}}
    assert field_of(box) == "model.domain[0]"


def test_corollary_needs_a_kind():
    data = {"schema_version": 1, "experiment": "corollary", "model": {"kind": "circle_product"}}
    assert field_of(data) == "options.kind"
    data["options"] = {"kind": "log_sobolev"}
    assert ExperimentConfig.from_dict(data).option("kind") == "log_sobolev"


def test_json_errors_carry_position():
    with pytest.raises(ConfigError) as info:
        parse_config('{\n  "schema_version": 1,\n  "experiment": }')
    assert info.value.line == 3
    assert info.value.column is not None
    assert "line 3" in str(info.value)


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError):
        validate_config(tmp_path / "missing.json")


def test_validate_config_reads_files(tmp_path):
    path = tmp_path / "eigen.json"
    path.write_text(json.dumps(make_config()), encoding="utf-8")
    assert validate_config(path).seed == 7


@pytest.mark.parametrize("comparison, value, tolerance, passed", [
    ("le", 1e-4, 1e-3, True),
    ("le", 1e-2, 1e-3, False),
    ("ge", -1e-4, 1e-3, True),
    ("ge", -1e-2, 1e-3, False),
    ("abs_le", -1e-4, 1e-3, True),
    ("abs_le", 2e-3, 1e-3, False),
    ("at_least", 1e-3, 1e-12, True),
    ("at_least", 0.0, 1e-12, False),
])
def test_check_comparisons(comparison, value, tolerance, passed):
    assert Check("c", value, tolerance, comparison).passed is passed


def test_non_finite_checks_fail():
    assert not Check("c", math.nan, 1.0).passed
    assert not Check("c", math.inf, 1.0, "ge").passed


def test_ledger_and_report():
    ledger = CheckLedger()
    assert ledger.summary() == {"status": "no_checks"}
    ledger.record("a", 0.0, 1e-3)
    ledger.record("b", 1.0, 1e-3, points=4)
    with pytest.raises(ValueError):
        ledger.record("c", 0.0, 1.0, comparison="between")
    assert ledger.summary() == {"total": 2, "failed": 1, "passed": False}
    assert [c.name for c in ledger.failures()] == ["b"]

    report = RunReport(config={"experiment": "eigen"}, checks=ledger.checks)
    assert report.exit_code == 2
    report.stamp(0.5)
    data = report.to_dict()
    assert data["timing"]["wall_time_s"] == 0.5
    assert data["checks"][1]["points"] == 4
    assert "error" not in data
    report.error = "NumericalFailure: no convergence"
    assert report.exit_code == 1
    assert RunReport(config={}).exit_code == 0
