"""
FINSGAP laboratory — one experiment per run.

The run cycle:
1. Setup:      the configured model, measure and grid (or needle / product)
2. Experiment: the registered runner records checks, results and plot series
3. Artifacts:  series CSVs and report.json, written atomically under the output directory

Everything in report.json except the `timing` key is a function of the
configuration (seed included).
"""
from __future__ import annotations
import contextlib
import json
import logging
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core.config import ExperimentConfig, validate_config
from .core.curvature import bochner_residual, ricci_lower_bound
from .core.errors import ConfigError, FinsgapError, StageFailure
from .core.geometry import ScalarField
from .core.grid import Grid
from .core.measure import WeightedMeasure, gaussian_measure
from .core.norms import (
    FinslerModel, dual_norm_batch, legendre_batch, reversibility_constant, unit_directions,
)
from .core.validator import CheckLedger, RunReport
from .engines.inequalities import (
    gaussian_profile, gaussian_quantile, isoperimetric_deficit, isoperimetric_profile_curve,
    log_sobolev_deficit,
)
from .engines.needles import (
    Needle, classify_equality_needle, make_gaussian_needle, make_quartic_needle,
    needle_isoperimetric_minimum, needle_logsobolev_deficit, needle_poincare,
)
from .engines.rigidity import (
    ProductModel, berwald_split_check, corollary_pipeline, eigen_refinement_study,
    splitting_check,
)
from .engines.spectral import first_eigenvalue
from .manifolds.circle import Circle, MinkowskiTorus
from .manifolds.minkowski import quartic_minkowski
from .manifolds.randers import minkowski_randers, shear_randers
from .manifolds.riemannian import euclidean

logger = logging.getLogger(__name__)

REPORT_NAME = "report.json"
DEFAULT_THETAS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
DEFAULT_TILTS = (0.0, 0.25, 0.5, 0.75, 1.0)


# ── Setup ──────────────────────────────────────────────────────────────

@dataclass
class Setup:
    model: FinslerModel
    measure: WeightedMeasure
    grid: Optional[Grid] = None
    needle: Optional[Needle] = None
    product: Optional[ProductModel] = None
    center: float = 0.0

    @property
    def equality_expected(self) -> bool:
        """Gaussian needles and split products attain λ₁ = K."""
        if self.product is not None:
            return True
        return self.needle is not None and self.needle.name == "gaussian"

    @property
    def line_coordinate(self) -> np.ndarray:
        """t − center at every grid node (the split / needle direction)."""
        return self.grid.points[:, -1] - self.center

    def describe(self) -> Dict[str, Any]:
        if self.product is not None:
            return self.product.describe()
        if self.needle is not None:
            return self.needle.describe()
        return {"model": self.model.name, "dim": self.model.dim, "measure": self.measure.describe()}


def _node_count(nodes: Sequence[int], index: int, default: int) -> int:
    return int(nodes[index]) if len(nodes) > index else default


def build_setup(config: ExperimentConfig) -> Setup:
    spec = config.model
    p = spec.parameters
    nodes = config.grid.nodes
    R = config.grid.truncation

    if spec.kind == "gaussian_needle":
        center = float(p.get("center", 0.0))
        needle = make_gaussian_needle(spec.K, R, _node_count(nodes, 0, 2001), center=center)
        return Setup(needle.model, needle.measure, needle.grid, needle=needle, center=center)
    if spec.kind == "quartic_needle":
        needle = make_quartic_needle(float(p.get("s", 0.0)), spec.K, R, _node_count(nodes, 0, 2001))
        return Setup(needle.model, needle.measure, needle.grid, needle=needle)

    if spec.kind in ("circle_product", "torus_product"):
        length = float(p.get("length", 2.0 * np.pi))
        if spec.kind == "circle_product":
            factor = Circle(length)
        else:
            factor = MinkowskiTorus(length, weight=float(p.get("weight", 0.2)),
                                    dim=int(p.get("dim", 2)))
        prod = ProductModel(factor, spec.K, sigma_nodes=_node_count(nodes, 0, 64),
                            line_nodes=_node_count(nodes, 1, 161), truncation=R)
        return Setup(prod.model, prod.measure, prod.grid, product=prod)

    if spec.kind == "euclidean":
        model = euclidean(int(p.get("dim", len(spec.domain) or 2)), spec.domain)
    elif spec.kind == "randers":
        if "b" not in p:
            raise ConfigError("randers models need a one-form b", field="model.parameters.b")
        model = minkowski_randers(p["b"])
    elif spec.kind == "shear_randers":
        model = shear_randers(float(p.get("strength", 0.5)), float(p.get("half_width", 1.5)))
    else:
        model = quartic_minkowski(int(p.get("dim", 2)), float(p.get("weight", 0.3)))
    return Setup(model, gaussian_measure(model.dim, spec.K))


# ── Plot series ────────────────────────────────────────────────────────

@dataclass
class Series:
    name: str
    columns: Tuple[str, ...]
    rows: List[Tuple[float, ...]] = field(default_factory=list)

    def add(self, *values: float) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"series {self.name}: {len(values)} values for {len(self.columns)} columns")
        self.rows.append(tuple(float(v) for v in values))

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        lines += [",".join("%.17g" % v for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"


def write_atomic(path: Path, text: str) -> None:
    """Write to a temporary sibling, then move it into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


# ── Laboratory ─────────────────────────────────────────────────────────

class Laboratory:
    """Runs one configured experiment and writes its artifacts."""

    VERSION = "1.0.0"

    def __init__(self, config: ExperimentConfig, out_dir: Optional[Path] = None):
        self.config = config
        self.out_dir = Path(out_dir if out_dir is not None else (config.output or "."))
        self.ledger = CheckLedger()
        self.results: Dict[str, Any] = {}
        self.series: List[Series] = []
        self.setup: Optional[Setup] = None

    @property
    def seed(self) -> int:
        return 0 if self.config.seed is None else int(self.config.seed)

    def new_series(self, name: str, *columns: str) -> Series:
        s = Series(name, tuple(columns))
        self.series.append(s)
        return s

    def run(self) -> RunReport:
        start = time.perf_counter()
        report = RunReport(config=self.config.to_dict())
        experiment = EXPERIMENTS[self.config.experiment]
        logger.info("experiment %s (%s), seed %s", experiment.name, experiment.theorem,
                    self.config.seed)
        try:
            # ── Phase 1: SETUP ──
            self.setup = build_setup(self.config)
            self.results["setup"] = self.setup.describe()
            # ── Phase 2: EXPERIMENT ──
            experiment.runner(self)
        except FinsgapError as exc:
            logger.error("%s failed: %s", experiment.name, exc)
            report.error = f"{type(exc).__name__}: {exc}"

        # ── Phase 3: ARTIFACTS ──
        report.checks = list(self.ledger.checks)
        report.results = _jsonable(self.results)
        for s in self.series:
            write_atomic(self.out_dir / f"{s.name}.csv", s.to_csv())
            report.artifacts.append(f"{s.name}.csv")
        report.stamp(time.perf_counter() - start)
        write_atomic(self.out_dir / REPORT_NAME,
                     json.dumps(_jsonable(report.to_dict()), indent=2, sort_keys=True) + "\n")
        summary = self.ledger.summary()
        logger.info("%s: %s in %.2fs", experiment.name,
                    "pass" if report.passed else "FAIL", report.wall_time_s)
        logger.debug("ledger: %s", summary)
        return report

    def status(self) -> Dict[str, Any]:
        return {
            "version": self.VERSION,
            "experiment": self.config.experiment,
            "out_dir": str(self.out_dir),
            "checks": self.ledger.summary(),
            "series": [s.name for s in self.series],
        }


def run_config(path, out_dir: Optional[Path] = None, seed: Optional[int] = None) -> RunReport:
    """validate → run; ConfigError propagates before anything is written."""
    config = validate_config(path, seed=seed)
    return Laboratory(config, out_dir).run()


# ── Experiments ────────────────────────────────────────────────────────

def _sample_box(model: FinslerModel, count: int, rng: np.random.Generator) -> np.ndarray:
    lo = np.array([max(a, -1.0) for a, _ in model.domain])
    hi = np.array([min(b, 1.0) for _, b in model.domain])
    pad = 0.1 * (hi - lo)
    return rng.uniform(lo + pad, hi - pad, size=(count, model.dim))


def run_core_checks(lab: Laboratory) -> None:
    """Norm-layer properties and the Bochner identity on sampled points."""
    cfg, setup = lab.config, lab.setup
    model, measure = setup.model, setup.measure
    rng = np.random.default_rng(lab.seed)
    count = int(cfg.option("samples", 200))
    x = _sample_box(model, count, rng)
    v = rng.standard_normal((count, model.dim))
    c = rng.uniform(0.1, 10.0, size=count)

    F = model.norm(x, v)
    homogeneity = np.max(np.abs(model.norm(x, c[:, None] * v) - c * F) / (c * F))
    lab.ledger.record("homogeneity", homogeneity, cfg.tolerance("homogeneity", 1e-10))

    eig_min = float(np.min(np.linalg.eigvalsh(model.tensor(x, v / F[:, None]))))
    lab.ledger.record("strong_convexity", eig_min, cfg.tolerance("strong_convexity", 1e-12),
                      comparison="at_least")

    alpha = model.flat(x, v)
    back = legendre_batch(model, x, alpha)
    roundtrip = np.max(np.linalg.norm(back - v, axis=-1) / np.linalg.norm(v, axis=-1))
    lab.ledger.record("legendre_roundtrip", roundtrip, cfg.tolerance("legendre", 1e-8))
    duality = np.max(np.abs(dual_norm_batch(model, x, alpha) - F) / F)
    lab.ledger.record("dual_norm_of_flat", duality, cfg.tolerance("legendre", 1e-8))

    sample = np.zeros((1, model.dim)) if model.x_independent else x[:16]
    lam = reversibility_constant(model, sample, unit_directions(model.dim, 64))
    lab.results["reversibility_constant"] = lam
    if "reversibility" in cfg.options:
        lab.ledger.record("reversibility_constant", lam - float(cfg.option("reversibility")),
                          cfg.tolerance("reversibility", 1e-6), comparison="abs_le")

    a = np.asarray(cfg.option("gradient", [1.0] * model.dim), dtype=float)
    if a.shape != (model.dim,):
        raise ConfigError(f"expected {model.dim} components", field="options.gradient")
    u = ScalarField(lambda y: np.asarray(y) @ a, lambda y: np.broadcast_to(a, np.shape(y)),
                    name="linear")
    points = x[: int(cfg.option("bochner_samples", 8))]
    residuals = [abs(bochner_residual(model, measure, u, p)) for p in points]
    lab.ledger.record("bochner_residual", max(residuals), cfg.tolerance("bochner", 1e-4),
                      points=len(residuals))
    lab.results["ricci_lower_bound"] = ricci_lower_bound(model, measure, points[:4], count=8)

    indicatrix = lab.new_series("indicatrix", "direction_index", "norm", "reverse_norm")
    origin = np.zeros(model.dim)
    for i, d in enumerate(unit_directions(model.dim, 64)):
        indicatrix.add(i, model.norm(origin, d), model.norm(origin, -d))


def _eigen_checks(lab: Laboratory, eigenvalue: float, K: float, tol: float) -> None:
    lab.ledger.record("eigenvalue_gap", eigenvalue - K, tol, comparison="ge")
    if lab.setup.equality_expected:
        lab.ledger.record("eigenvalue_sharpness", eigenvalue - K, tol, comparison="abs_le")


def run_eigen(lab: Laboratory) -> None:
    cfg, setup = lab.config, lab.setup
    K = cfg.model.K
    result = first_eigenvalue(setup.model, setup.measure, setup.grid, seed=lab.seed,
                              max_iter=int(cfg.option("max_iter", 2000)),
                              tol=float(cfg.option("tol", 1e-10)),
                              method=str(cfg.option("method", "implicit")))
    lab.results["eigen"] = result.to_dict()
    _eigen_checks(lab, result.eigenvalue, K, cfg.tolerance("eigenvalue", 1e-3))

    if setup.equality_expected:
        grid = setup.grid
        masses = grid.weights * setup.measure.density(grid.points)
        t = setup.line_coordinate
        t = t - (masses @ t) / masses.sum()
        u = result.eigenfield.values
        corr = (masses @ (u * t)) / np.sqrt((masses @ u ** 2) * (masses @ t ** 2))
        lab.results["eigenfield_correlation"] = float(corr)
        lab.ledger.record("eigenfield_correlation", 1.0 - abs(corr),
                          cfg.tolerance("correlation", 1e-3))

    history = lab.new_series("rayleigh_history", "iteration", "rayleigh_quotient")
    for i, q in enumerate(result.history):
        history.add(i, q)
    if setup.grid.dim == 1:
        profile = lab.new_series("eigenfield", "t", "u")
        for t, u in zip(setup.grid.points[:, 0], result.eigenfield.values):
            profile.add(t, u)


def run_needle(lab: Laboratory) -> None:
    """The 1D problems every needle of a decomposition has to satisfy."""
    cfg, needle = lab.config, lab.setup.needle
    K = cfg.model.K
    tol = cfg.tolerance("deficit", 1e-3)

    spectrum = needle_poincare(needle, K)
    lab.results["poincare"] = spectrum.to_dict()
    _eigen_checks(lab, spectrum.eigenvalue, K, cfg.tolerance("eigenvalue", 1e-3))

    curve = lab.new_series("needle_profile", "theta", "gaussian_profile", "needle_content",
                           "interval_minimizer")
    worst = np.inf
    for theta in cfg.option("thetas", DEFAULT_THETAS):
        best = needle_isoperimetric_minimum(needle, float(theta), K)
        profile = gaussian_profile(K, float(theta))
        worst = min(worst, best.profile_gap)
        curve.add(theta, profile, best.content, best.minimizer_type == "interval")
    lab.ledger.record("isoperimetric_deficit", worst, tol, comparison="ge")

    tilts = lab.new_series("needle_tilt_deficit", "tilt", "deficit")
    lowest = np.inf
    for a in cfg.option("tilts", DEFAULT_TILTS):
        a = float(a)
        report = needle_logsobolev_deficit(needle, lambda s: np.exp(a * s - 0.5 * a * a / K), K)
        lowest = min(lowest, report.deficit)
        tilts.add(a, report.deficit)
    lab.ledger.record("log_sobolev_deficit", lowest, tol, comparison="ge")

    classification = classify_equality_needle(needle, K, tol=cfg.tolerance("classification", 1e-2))
    lab.results["classification"] = classification.to_dict()
    if lab.setup.equality_expected:
        lab.ledger.record("gaussian_classification",
                          max(classification.max_deviation, classification.centered_residual),
                          classification.tolerance)


def run_rigidity(lab: Laboratory) -> None:
    cfg, prod = lab.config, lab.setup.product
    K = prod.K
    result = prod.eigen(seed=lab.seed, max_iter=int(cfg.option("max_iter", 2000)))
    lab.results["eigen"] = result.to_dict()
    lab.ledger.record("eigenvalue_sharpness", result.eigenvalue - K,
                      cfg.tolerance("eigenvalue", 1e-3), comparison="abs_le")

    split = splitting_check(prod.model, prod.measure, prod.grid, result.eigenfield, K,
                            samples=int(cfg.option("samples", 64)))
    lab.results["splitting"] = split.to_dict()
    tol = cfg.tolerance("splitting", 1e-2)
    for name, value in split.residuals().items():
        lab.ledger.record(name, value, tol)

    if isinstance(prod.factor, MinkowskiTorus):
        berwald = berwald_split_check(prod, prod.candidate, prod.core_points(4))
        lab.results["berwald"] = berwald.to_dict()
        lab.ledger.record("gamma_block_residual", berwald.gamma_block_residual,
                          cfg.tolerance("gamma_block", 1e-6))
        lab.ledger.record("geodesic_projection_residual", berwald.geodesic_projection_residual,
                          cfg.tolerance("geodesic_projection", 1e-4))

    history = lab.new_series("rayleigh_history", "iteration", "rayleigh_quotient")
    for i, q in enumerate(result.history):
        history.add(i, q)

    resolutions = cfg.option("refinement")
    if resolutions:
        study = eigen_refinement_study(prod.factor, K, [tuple(r) for r in resolutions],
                                       seed=lab.seed, samples=int(cfg.option("samples", 64)))
        lab.results["refinement"] = study.to_dict()
        table = lab.new_series("eigen_refinement", "spacing", "eigenvalue", "error",
                               "hessian_max", "gradnorm_std", "psi_residual", "gaussian_fit")
        for row in study.rows:
            table.add(row["spacing"], row["eigenvalue"], row["error"], row["hessian_max"],
                      row["gradnorm_std"], row["psi_residual"], row["gaussian_fit"])


def run_isoperimetric(lab: Laboratory) -> None:
    cfg, setup = lab.config, lab.setup
    K = cfg.model.K
    t = setup.line_coordinate
    sweep = lab.new_series("isoperimetric_deficit", "theta", "measured_theta", "profile_bound",
                           "content", "deficit")
    worst = np.inf
    for theta in cfg.option("thetas", DEFAULT_THETAS):
        theta = float(theta)
        if setup.needle is not None:
            a = setup.needle.quantile(theta)
        else:
            a = gaussian_quantile(K, theta)
        report = isoperimetric_deficit(setup.model, setup.measure, setup.grid,
                                       t <= a + 1e-12, K)
        worst = min(worst, report.deficit)
        sweep.add(theta, report.parameters["theta"], report.lhs, report.rhs, report.deficit)
    lab.ledger.record("isoperimetric_deficit", worst, cfg.tolerance("deficit", 1e-3),
                      comparison="ge")

    thetas = np.linspace(0.01, 0.99, 99)
    curve = lab.new_series("profile_curve", "theta", "profile")
    for theta, value in zip(thetas, isoperimetric_profile_curve(K, thetas)):
        curve.add(theta, value)


def run_log_sobolev(lab: Laboratory) -> None:
    cfg, setup = lab.config, lab.setup
    K = cfg.model.K
    tol = cfg.tolerance("deficit", 1e-3)
    t = setup.line_coordinate
    tilts = lab.new_series("tilt_deficit", "tilt", "deficit")
    deficits = []
    for a in cfg.option("tilts", DEFAULT_TILTS):
        a = float(a)
        report = log_sobolev_deficit(setup.model, setup.measure, setup.grid,
                                     np.exp(a * t - 0.5 * a * a / K), K)
        deficits.append(report.deficit)
        tilts.add(a, report.deficit)
    lab.ledger.record("log_sobolev_deficit", min(deficits), tol, comparison="ge")
    if setup.equality_expected:
        lab.ledger.record("tilt_equality", max(abs(d) for d in deficits), tol)

    count = int(cfg.option("random_densities", 0))
    if count:
        rng = np.random.default_rng(lab.seed)
        scale = float(np.max(np.abs(t)))
        random = lab.new_series("random_deficit", "sample", "deficit")
        lowest = np.inf
        for i in range(count):
            c = rng.uniform(-1.0, 1.0, size=3)
            s = t / scale
            rho = np.exp(c[0] * np.sin(np.pi * s) + c[1] * np.cos(2.0 * np.pi * s) + c[2] * s ** 2)
            report = log_sobolev_deficit(setup.model, setup.measure, setup.grid, rho, K)
            lowest = min(lowest, report.deficit)
            random.add(i, report.deficit)
        lab.ledger.record("random_log_sobolev_deficit", lowest, tol, comparison="ge")


def run_corollary(lab: Laboratory) -> None:
    cfg, prod = lab.config, lab.setup.product
    kind = cfg.option("kind")
    try:
        report = corollary_pipeline(kind, prod, theta=float(cfg.option("theta", 0.5)),
                                    tolerance=cfg.tolerance("stage", 1e-3),
                                    classification_tol=cfg.tolerance("classification", 1e-2))
        stages = report.stages
        lab.results["corollary"] = report.to_dict()
    except StageFailure as exc:
        stages = exc.stages
        lab.results["corollary"] = {"kind": kind, "failed_stage": exc.stage,
                                    "stages": [s.to_dict() for s in stages]}
    table = lab.new_series("corollary_stages", "stage_index", "value", "tolerance")
    for i, s in enumerate(stages):
        lab.ledger.record(s.name, s.value, s.tolerance)
        table.add(i, s.value, s.tolerance)


# ── Registry ───────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Experiment:
    name: str
    theorem: str
    required: Tuple[str, ...]
    description: str
    runner: Callable[[Laboratory], None]


_REQUIRED = ("schema_version", "experiment", "model.kind")

EXPERIMENTS: Dict[str, Experiment] = {e.name: e for e in (
    Experiment("core-checks", "Bochner formula", _REQUIRED,
               "norm homogeneity, convexity, Legendre duality and the Bochner identity",
               run_core_checks),
    Experiment("eigen", "Spectral gap", _REQUIRED + ("model.K", "seed"),
               "first nonzero eigenvalue of the nonlinear Laplacian", run_eigen),
    Experiment("needle", "Needle decomposition", _REQUIRED + ("model.K",),
               "Poincaré, isoperimetric and log-Sobolev problems on one needle", run_needle),
    Experiment("rigidity", "Diffeomorphic splitting", _REQUIRED + ("model.K",),
               "eigen-solve and splitting diagnostics on Σ × (ℝ, γ_K)", run_rigidity),
    Experiment("isoperimetric", "Bakry–Ledoux isoperimetric inequality",
               _REQUIRED + ("model.K",), "half-space deficits across θ", run_isoperimetric),
    Experiment("log-sobolev", "Logarithmic Sobolev inequality",
               _REQUIRED + ("model.K",), "tilt-family and random-density deficits",
               run_log_sobolev),
    Experiment("corollary", "Rigidity of logarithmic Sobolev and isoperimetric inequalities",
               _REQUIRED + ("model.K", "options.kind"),
               "five-stage reduction of a corollary to Poincaré equality", run_corollary),
)}


def list_experiments() -> List[Experiment]:
    return list(EXPERIMENTS.values())
