"""
Experiment configuration — versioned JSON documents.

    {
      "schema_version": 1,
      "experiment": "eigen",
      "seed": 7,
      "model": {"kind": "gaussian_needle", "K": 1.0, "parameters": {"center": 0.0}},
      "grid": {"nodes": [2001], "truncation": 8.0},
      "tolerances": {"eigenvalue": 1e-3},
      "options": {},
      "output": "runs/eigen"
    }

Unknown keys are rejected; every error names the dotted path of the
offending field, and JSON syntax errors carry line and column.
"""
from __future__ import annotations
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from .errors import ConfigError

SCHEMA_VERSION = 1

EXPERIMENTS = ("core-checks", "eigen", "needle", "rigidity", "isoperimetric",
               "log-sobolev", "corollary")

# kind → parameters it accepts
MODEL_PARAMETERS: Dict[str, Tuple[str, ...]] = {
    "euclidean": ("dim",),
    "randers": ("b",),
    "shear_randers": ("strength", "half_width"),
    "minkowski": ("dim", "weight"),
    "gaussian_needle": ("center",),
    "quartic_needle": ("s",),
    "circle_product": ("length",),
    "torus_product": ("length", "weight", "dim"),
}

COROLLARY_KINDS = ("log_sobolev", "isoperimetric")
NEEDLE_KINDS = ("gaussian_needle", "quartic_needle")
PRODUCT_KINDS = ("circle_product", "torus_product")
CHART_KINDS = ("euclidean", "randers", "shear_randers", "minkowski")

# experiment → model kinds it runs on
EXPERIMENT_MODELS: Dict[str, Tuple[str, ...]] = {
    "core-checks": CHART_KINDS,
    "eigen": NEEDLE_KINDS + PRODUCT_KINDS,
    "needle": NEEDLE_KINDS,
    "rigidity": PRODUCT_KINDS,
    "isoperimetric": NEEDLE_KINDS + PRODUCT_KINDS,
    "log-sobolev": NEEDLE_KINDS + PRODUCT_KINDS,
    "corollary": PRODUCT_KINDS,
}

Number = Union[int, float]


def _path(parent: str, key: Union[str, int]) -> str:
    if isinstance(key, int):
        return f"{parent}[{key}]"
    return f"{parent}.{key}" if parent else key


def _require_mapping(value: Any, where: str) -> Dict[str, Any]:
    if not isinstance(value, dict):
        raise ConfigError(f"expected an object, got {type(value).__name__}", field=where)
    return value


def _reject_unknown(data: Dict[str, Any], allowed, where: str) -> None:
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})",
                              field=_path(where, key))


def _number(value: Any, where: str, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field=where)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError("expected a finite number", field=where)
    if positive and value <= 0:
        raise ConfigError(f"expected a positive number, got {value:g}", field=where)
    return value


def _integer(value: Any, where: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {value!r}", field=where)
    if value < minimum:
        raise ConfigError(f"expected an integer ≥ {minimum}, got {value}", field=where)
    return value


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    K: float = 1.0
    N: Optional[float] = None            # None is N = ∞
    parameters: Dict[str, Any] = field(default_factory=dict)
    domain: Tuple[Tuple[float, float], ...] = ()

    KEYS = ("kind", "K", "N", "parameters", "domain")

    @classmethod
    def from_dict(cls, data: Any, where: str = "model") -> "ModelSpec":
        data = _require_mapping(data, where)
        _reject_unknown(data, cls.KEYS, where)
        if "kind" not in data:
            raise ConfigError("missing required key", field=_path(where, "kind"))
        kind = data["kind"]
        if kind not in MODEL_PARAMETERS:
            raise ConfigError(f"unknown model kind {kind!r} (known: {', '.join(MODEL_PARAMETERS)})",
                              field=_path(where, "kind"))
        K = _number(data.get("K", 1.0), _path(where, "K"), positive=True)
        N = data.get("N")
        if N is not None:
            N = _number(N, _path(where, "N"), positive=True)
        params = _require_mapping(data.get("parameters", {}), _path(where, "parameters"))
        _reject_unknown(params, MODEL_PARAMETERS[kind], _path(where, "parameters"))
        for key, value in params.items():
            if key == "b":
                if not isinstance(value, list) or not value:
                    raise ConfigError("expected a nonempty list of numbers",
                                      field=_path(_path(where, "parameters"), key))
                for i, item in enumerate(value):
                    _number(item, _path(_path(_path(where, "parameters"), key), i))
            elif key == "dim":
                _integer(value, _path(_path(where, "parameters"), key), minimum=1)
            else:
                _number(value, _path(_path(where, "parameters"), key))
        domain: List[Tuple[float, float]] = []
        raw_domain = data.get("domain", [])
        if not isinstance(raw_domain, list):
            raise ConfigError("expected a list of [lo, hi] pairs", field=_path(where, "domain"))
        for i, pair in enumerate(raw_domain):
            here = _path(_path(where, "domain"), i)
            if not isinstance(pair, list) or len(pair) != 2:
                raise ConfigError("expected a [lo, hi] pair", field=here)
            lo, hi = _number(pair[0], _path(here, 0)), _number(pair[1], _path(here, 1))
            if not lo < hi:
                raise ConfigError(f"empty interval [{lo:g}, {hi:g}]", field=here)
            domain.append((lo, hi))
        return cls(kind=kind, K=K, N=N, parameters=dict(params), domain=tuple(domain))

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"kind": self.kind, "K": self.K, "N": self.N,
                               "parameters": dict(self.parameters)}
        if self.domain:
            out["domain"] = [list(pair) for pair in self.domain]
        return out


@dataclass(frozen=True)
class GridSpec:
    nodes: Tuple[int, ...] = ()
    truncation: Optional[float] = None

    KEYS = ("nodes", "truncation")

    @classmethod
    def from_dict(cls, data: Any, where: str = "grid") -> "GridSpec":
        data = _require_mapping(data, where)
        _reject_unknown(data, cls.KEYS, where)
        raw = data.get("nodes", [])
        if not isinstance(raw, list):
            raise ConfigError("expected a list of node counts", field=_path(where, "nodes"))
        nodes = tuple(_integer(n, _path(_path(where, "nodes"), i), minimum=3)
                      for i, n in enumerate(raw))
        truncation = data.get("truncation")
        if truncation is not None:
            truncation = _number(truncation, _path(where, "truncation"), positive=True)
        return cls(nodes=nodes, truncation=truncation)

    def to_dict(self) -> Dict[str, Any]:
        return {"nodes": list(self.nodes), "truncation": self.truncation}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    model: ModelSpec
    grid: GridSpec = field(default_factory=GridSpec)
    tolerances: Dict[str, float] = field(default_factory=dict)
    options: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    output: Optional[str] = None
    schema_version: int = SCHEMA_VERSION

    KEYS = ("schema_version", "experiment", "model", "grid", "tolerances", "options",
            "seed", "output")

    @classmethod
    def from_dict(cls, data: Any) -> "ExperimentConfig":
        data = _require_mapping(data, "")
        _reject_unknown(data, cls.KEYS, "")
        for key in ("schema_version", "experiment", "model"):
            if key not in data:
                raise ConfigError("missing required key", field=key)
        version = data["schema_version"]
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema version {version!r} (expected {SCHEMA_VERSION})",
                              field="schema_version")
        experiment = data["experiment"]
        if experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {experiment!r} (known: {', '.join(EXPERIMENTS)})",
                              field="experiment")
        model = ModelSpec.from_dict(data["model"])
        if model.kind not in EXPERIMENT_MODELS[experiment]:
            raise ConfigError(
                f"experiment {experiment!r} runs on {', '.join(EXPERIMENT_MODELS[experiment])}",
                field="model.kind")
        grid = GridSpec.from_dict(data.get("grid", {}))
        tolerances = _require_mapping(data.get("tolerances", {}), "tolerances")
        tolerances = {k: _number(v, _path("tolerances", k), positive=True)
                      for k, v in tolerances.items()}
        options = _require_mapping(data.get("options", {}), "options")
        if experiment == "corollary" and options.get("kind") not in COROLLARY_KINDS:
            raise ConfigError(f"expected one of {', '.join(COROLLARY_KINDS)}", field="options.kind")
        seed = data.get("seed")
        if seed is not None:
            seed = _integer(seed, "seed")
            if seed >= 2 ** 64:
                raise ConfigError("seed must fit in 64 bits", field="seed")
        elif experiment == "eigen":
            raise ConfigError("a seed is mandatory for eigen experiments", field="seed")
        output = data.get("output")
        if output is not None and not isinstance(output, str):
            raise ConfigError("expected a path string", field="output")
        return cls(experiment=experiment, model=model, grid=grid, tolerances=tolerances,
                   options=dict(options), seed=seed, output=output)

    def tolerance(self, name: str, default: float) -> float:
        return float(self.tolerances.get(name, default))

    def option(self, name: str, default: Any = None) -> Any:
        return self.options.get(name, default)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "experiment": self.experiment,
            "model": self.model.to_dict(),
            "grid": self.grid.to_dict(),
            "tolerances": dict(self.tolerances),
            "options": dict(self.options),
            "seed": self.seed,
            "output": self.output,
        }


def parse_config(text: str, seed: Optional[int] = None) -> ExperimentConfig:
    """Parse a JSON document; a given seed replaces the document's before validation."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno, column=exc.colno) from None
    if seed is not None and isinstance(data, dict):
        data = {**data, "seed": seed}
    return ExperimentConfig.from_dict(data)


def validate_config(path: Union[str, Path], seed: Optional[int] = None) -> ExperimentConfig:
    """Read and validate a configuration file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, seed=seed)
