"""
Rigidity — product models that attain λ₁ = K, and the splitting diagnostics.

If λ₁ = K under CD(K,∞) with eigenfunction u, then on M_u:

    ∇²u = 0,   F(∇u) ≡ const,   Ric_∞(∇u) = K F²(∇u),   dΨ(∇u) = K u,
    (Ψ∘σ)'' = K along unit integral curves σ of ∇u,

and (M, m) splits as Σ × (ℝ, γ_K). For Berwald structures the connection
has no mixed Σ/ℝ components and geodesics project to geodesics of both factors.
The model spaces here are Σ × (ℝ, γ_K) with Σ a flat circle or Minkowski torus.
"""
from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from ..core.curvature import psi_derivatives, weighted_ricci
from ..core.errors import DomainExit, InvalidArgument, StageFailure
from ..core.geometry import (
    Geodesic, ScalarField, as_field, berwald_test, connection, distance, geodesic_residual,
    gradient, integrate_geodesic,
)
from ..core.grid import Axis, DiscreteField, Grid
from ..core.measure import WeightedMeasure, gaussian_measure, product_measure, uniform_measure
from ..core.norms import FinslerModel, legendre_batch, reversibility_constant, unit_directions
from ..core.parallel import parallel_map
from ..manifolds.circle import Circle, MinkowskiTorus
from ..manifolds.product import product
from ..manifolds.riemannian import euclidean
from .inequalities import (
    gaussian_quantile, isoperimetric_deficit, log_sobolev_deficit, poincare_deficit,
)
from .needles import (
    classify_equality_needle, needle_balance, needle_isoperimetric_minimum,
    needle_logsobolev_deficit, needle_witness_gap, product_decomposition, verify_disintegration,
)
from .spectral import EigenResult, first_eigenvalue, gradient_field

logger = logging.getLogger(__name__)

Factor = Union[Circle, MinkowskiTorus]
_SECOND = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


class ProductModel:
    """Σ × (ℝ, γ_K) on a grid: Σ periodic, the line truncated at ±R."""

    def __init__(self, factor: Factor, K: float, sigma_nodes: int = 64, line_nodes: int = 161,
                 truncation: Optional[float] = None):
        if not K > 0:
            raise InvalidArgument("product model needs K > 0")
        gap = factor.spectral_gap()
        if not gap > K:
            raise InvalidArgument(
                f"Σ gap {gap:.6g} ≤ K = {K:g}: the first eigenfunction would live on Σ")
        self.factor = factor
        self.K = float(K)
        self.R = 8.0 / np.sqrt(K) if truncation is None else float(truncation)
        self.line = euclidean(1)
        self.model: FinslerModel = product(factor.model, self.line,
                                           name=f"{factor.describe()['factor']}×gaussian")
        self.sigma_measure = uniform_measure(factor.dim, float(np.prod(factor.periods)))
        self.line_measure = gaussian_measure(1, K)
        self.measure: WeightedMeasure = product_measure(self.sigma_measure, self.line_measure)
        axes = [Axis.circle(p, sigma_nodes) for p in factor.periods]
        axes.append(Axis.interval(-self.R, self.R, line_nodes))
        self.grid = Grid(axes)
        self.candidate = DiscreteField(grid=self.grid, values=np.sqrt(K) * self.grid.points[:, -1],
                                       name="candidate")

    @property
    def dim(self) -> int:
        return self.grid.dim

    def eigen(self, seed: int = 0, **kwargs) -> EigenResult:
        return first_eigenvalue(self.model, self.measure, self.grid, seed=seed, **kwargs)

    def core_points(self, count: int = 16, level: float = 1e-3) -> np.ndarray:
        """Deterministic node sample where the density is at least level·max."""
        density = self.measure.density(self.grid.points)
        idx = np.flatnonzero(density >= level * density.max())
        picks = idx[np.unique(np.linspace(0, idx.size - 1, min(count, idx.size)).astype(int))]
        return self.grid.points[picks]

    def describe(self) -> Dict:
        return {"factor": self.factor.describe(), "K": self.K, "R": self.R,
                "grid": self.grid.describe()}


def build_product_model(factor: Factor, K: float, sigma_nodes: int = 64, line_nodes: int = 161,
                        truncation: Optional[float] = None) -> ProductModel:
    return ProductModel(factor, K, sigma_nodes, line_nodes, truncation)


# ── Splitting diagnostics ──────────────────────────────────────────────

@dataclass
class SplitReport:
    hessian_max: float
    gradnorm_std: float
    ricci_gap: float
    psi_residual: float
    gaussian_fit: float
    technical_norm: float
    samples: int = 0

    def residuals(self) -> Dict[str, float]:
        return {"hessian_max": self.hessian_max, "gradnorm_std": self.gradnorm_std,
                "ricci_gap": self.ricci_gap, "psi_residual": self.psi_residual,
                "gaussian_fit": self.gaussian_fit}

    @property
    def max_residual(self) -> float:
        return max(self.residuals().values())

    def passes(self, tol: float) -> bool:
        return self.max_residual <= tol

    def to_dict(self) -> Dict:
        return {**self.residuals(), "technical_norm": self.technical_norm, "samples": self.samples}


def _field_values(grid: Grid, u) -> np.ndarray:
    if isinstance(u, DiscreteField):
        return u.values
    if callable(u):
        return DiscreteField.from_function(grid, u).values
    return DiscreteField(grid, u).values


def _interior(grid: Grid, margin: int = 2) -> np.ndarray:
    index = np.unravel_index(np.arange(grid.size), grid.shape)
    keep = np.ones(grid.size, dtype=bool)
    for k, axis in enumerate(grid.axes):
        if not axis.periodic:
            keep &= (index[k] >= margin) & (index[k] < axis.count - margin)
    return keep


def _integral_curves(grid: Grid, model: FinslerModel, grad: np.ndarray, x0: np.ndarray,
                     offsets: np.ndarray, substeps: int = 4) -> np.ndarray:
    """Points σ(s) of the unit integral curves of ∇u through x0, shape (len(offsets), m, n)."""
    field_at = grid.interpolator(grad, method="linear")

    def unit(x):
        v = field_at(x)
        return v / model.norm(x, v)[..., None]

    out = np.empty((len(offsets),) + x0.shape)
    for j, s in enumerate(offsets):
        x = x0.copy()
        if s != 0.0:
            dt = s / substeps
            for _ in range(substeps):
                k1 = unit(x)
                k2 = unit(x + 0.5 * dt * k1)
                k3 = unit(x + 0.5 * dt * k2)
                k4 = unit(x + dt * k3)
                x = x + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        out[j] = x
    return out


def splitting_check(model: FinslerModel, measure: WeightedMeasure, grid: Grid, u, K: float,
                    samples: int = 64, core: float = 1e-3) -> SplitReport:
    """
    Every splitting condition at up to `samples` nodes of M_u inside the core
    region (density ≥ core·max, two nodes clear of interval ends).
    """
    values = _field_values(grid, u)
    n = grid.dim
    pts = grid.points
    du = grid.nodal_differential(values)
    live = np.linalg.norm(du, axis=-1) > 1e-12
    if not live.any():
        raise InvalidArgument("essential domain M_u is empty")
    grad = np.zeros_like(du)
    grad[live] = legendre_batch(model, pts[live], du[live])
    density = measure.density(pts)
    region = live & (density >= core * density.max()) & _interior(grid)
    if not region.any():
        raise InvalidArgument("no node of M_u inside the core region")
    idx = np.flatnonzero(region)
    idx = idx[np.unique(np.linspace(0, idx.size - 1, min(samples, idx.size)).astype(int))]
    xs, gs = pts[idx], grad[idx]

    # (i) Hessian from differences of the gradient field plus Γ(∇u)
    dgrad = np.stack([grid.nodal_differential(grad[:, i]) for i in range(n)], axis=1)[idx]
    if not model.x_independent:
        gammas = np.stack([connection(model, x, g) for x, g in zip(xs, gs)])
        dgrad = dgrad + np.einsum("sijk,sk->sij", gammas, gs)
    g = model.tensor(xs, gs)
    g_inv = np.linalg.inv(g)
    hs = np.einsum("sij,sjk,skl,sli->s", g_inv, np.swapaxes(dgrad, -1, -2), g, dgrad)
    hessian_max = float(np.sqrt(np.max(np.clip(hs, 0.0, None))))

    speeds = model.norm(pts[region], grad[region])
    gradnorm_std = float(np.std(speeds))

    # (ii) curvature and Ψ along the geodesic extension of ∇u
    def pointwise(i):
        x, v = xs[i], gs[i]
        ric = weighted_ricci(model, measure, x, v)
        d1, _ = psi_derivatives(model, measure, x, v)
        F2 = float(model.norm(x, v)) ** 2
        return abs(ric - K * F2), abs(d1 - K * values[idx[i]])

    pairs = np.array(parallel_map(pointwise, range(len(idx))))
    ricci_gap = float(np.max(pairs[:, 0]))
    psi_residual = float(np.max(pairs[:, 1]))

    # (Ψ∘σ)'' along unit integral curves
    h = float(np.max(grid.spacing))
    curves = _integral_curves(grid, model, grad, xs, h * np.array([-2.0, -1.0, 0.0, 1.0, 2.0]))
    field_at = grid.interpolator(grad, method="linear")
    big_psi = np.stack([
        measure.log_density(c) + 0.5 * np.linalg.slogdet(model.tensor(c, field_at(c)))[1]
        for c in curves
    ])
    gaussian_fit = float(np.max(np.abs(_SECOND @ big_psi / h ** 2 - K)))

    # the technical integral ∫F²(∇^{∇u}[F(∇u)]) dm
    speed = np.zeros(grid.size)
    speed[live] = model.norm(pts[live], grad[live])
    dspeed = grid.nodal_differential(speed)
    w = np.zeros_like(dspeed)
    w[live] = np.linalg.solve(model.tensor(pts[live], grad[live]), dspeed[live][..., None])[..., 0]
    masses = grid.weights * density
    integrand = np.where(live, model.norm(pts, w) ** 2, 0.0)
    technical = float(masses @ integrand) / float(masses.sum())

    report = SplitReport(hessian_max=hessian_max, gradnorm_std=gradnorm_std, ricci_gap=ricci_gap,
                         psi_residual=psi_residual, gaussian_fit=gaussian_fit,
                         technical_norm=technical, samples=int(idx.size))
    logger.info("splitting check: %s", report.to_dict())
    return report


def affine_check(model: FinslerModel, u, geodesics: Sequence[Geodesic]) -> float:
    """max |(u∘ξ)''| along the sampled geodesics."""
    grid = u.grid if isinstance(u, DiscreteField) else None
    fn = grid.interpolator(u.values) if grid is not None else as_field(u)
    worst = 0.0
    for geo in geodesics:
        if grid is not None and not np.all(grid.contains(geo.points)):
            raise DomainExit("geodesic leaves the grid", partial=geo)
        vals = np.asarray(fn(geo.points), dtype=float)
        dt = np.diff(geo.times)
        second = (vals[2:] - 2.0 * vals[1:-1] + vals[:-2]) / (dt[1:] * dt[:-1])
        worst = max(worst, float(np.max(np.abs(second))))
    return worst


# ── Berwald products ───────────────────────────────────────────────────

@dataclass
class BerwaldSplit:
    gamma_block_residual: float
    geodesic_projection_residual: float

    def to_dict(self) -> Dict:
        return {"gamma_block_residual": self.gamma_block_residual,
                "geodesic_projection_residual": self.geodesic_projection_residual}


def _as_smooth(u) -> ScalarField:
    if isinstance(u, DiscreteField):
        return ScalarField(u.grid.interpolator(u.values), name=u.name)
    return as_field(u)


def berwald_split_check(prod: ProductModel, u, sample: Sequence, T: float = 1.0,
                        steps: int = 32) -> BerwaldSplit:
    """
    Mixed connection components Γ^i_jk(∇u) with an index on the ℝ axis, and the
    deviation of (ρ(ξ), u(ξ)) from factor geodesics for geodesics ξ through the sample.
    """
    model = prod.model
    pts = np.atleast_2d(np.asarray(sample, dtype=float))
    if not berwald_test(model, pts).is_berwald:
        raise InvalidArgument(f"{model.name} is not Berwald on the sample")
    field_ = _as_smooth(u)
    n = model.dim
    touches = np.zeros((n, n, n), dtype=bool)
    touches[n - 1, :, :] = touches[:, n - 1, :] = touches[:, :, n - 1] = True

    def per_point(x):
        g0 = gradient(model, field_, x)
        gamma = connection(model, x, g0)
        block = float(np.max(np.abs(gamma[touches])))
        worst = 0.0
        sigma_dirs = unit_directions(n - 1, 4)
        for d in sigma_dirs[:2]:
            v = np.concatenate([d, [1.0]])
            geo = integrate_geodesic(model, x, v, T=T, steps=steps)
            projected = Geodesic(times=geo.times, points=geo.points[:, :-1],
                                 velocities=geo.velocities[:, :-1],
                                 speed=float(prod.factor.model.norm(x[:-1], d)))
            worst = max(worst, geodesic_residual(prod.factor.model, projected))
            worst = max(worst, affine_check(model, field_, [geo]))
        return block, worst

    results = np.array(parallel_map(per_point, list(pts)))
    return BerwaldSplit(gamma_block_residual=float(np.max(results[:, 0])),
                        geodesic_projection_residual=float(np.max(results[:, 1])))


def factor_isometry(prod: ProductModel, pairs: Sequence, shifts: Sequence[float]) -> float:
    """max over pairs (x, y) in Σ of the spread of d((x, s), (y, s)) across shifts s."""
    worst = 0.0
    for x, y in pairs:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        d = [distance(prod.model, np.append(x, s), np.append(y, s)) for s in shifts]
        worst = max(worst, float(np.ptp(d)))
    return worst


def translate(u: DiscreteField, delta: float, axis: int = -1) -> DiscreteField:
    """x ↦ u(x + δ e_axis): the flow φ_δ of the split line acting on fields."""
    grid = u.grid
    k = axis % grid.dim
    shifted = grid.points.copy()
    shifted[:, k] += delta
    values = grid.interpolator(u.values, method="linear")(shifted)
    return DiscreteField(grid, values, name=f"translate({u.name}, {delta:g})")


# ── Refinement ─────────────────────────────────────────────────────────

@dataclass
class RefinementStudy:
    rows: List[Dict] = field(default_factory=list)

    def orders(self) -> Dict[str, float]:
        """Observed convergence orders between the two finest resolutions."""
        if len(self.rows) < 2:
            return {}
        coarse, fine = self.rows[-2], self.rows[-1]
        ratio = np.log(coarse["spacing"] / fine["spacing"])
        out = {}
        for key in ("error", "hessian_max", "gradnorm_std", "psi_residual", "gaussian_fit"):
            a, b = coarse[key], fine[key]
            if a > 0 and b > 0:
                out[key] = float(np.log(a / b) / ratio)
        return out

    def to_dict(self) -> Dict:
        return {"rows": list(self.rows), "orders": self.orders()}


def eigen_refinement_study(factor: Factor, K: float, resolutions: Sequence = ((32, 81), (64, 161)),
                           seed: int = 0, samples: int = 32) -> RefinementStudy:
    study = RefinementStudy()
    for sigma_nodes, line_nodes in resolutions:
        prod = ProductModel(factor, K, sigma_nodes=sigma_nodes, line_nodes=line_nodes)
        result = prod.eigen(seed=seed)
        split = splitting_check(prod.model, prod.measure, prod.grid, result.eigenfield, K,
                                samples=samples)
        study.rows.append({"spacing": float(np.max(prod.grid.spacing)),
                           "eigenvalue": result.eigenvalue,
                           "error": abs(result.eigenvalue - K), **split.to_dict()})
        logger.info("refinement %s: λ₁=%.10g", (sigma_nodes, line_nodes), result.eigenvalue)
    return study


# ── Corollary pipelines ────────────────────────────────────────────────

@dataclass
class StageResult:
    name: str
    value: float
    tolerance: float
    detail: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)

    def to_dict(self) -> Dict:
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance,
                "passed": self.passed, **self.detail}


@dataclass
class CorollaryReport:
    kind: str
    K: float
    stages: List[StageResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.stages)

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "K": self.K, "passed": self.passed,
                "stages": [s.to_dict() for s in self.stages]}


STAGES = ("ambient_equality", "disintegration", "needle_equality",
          "needle_classification", "poincare_equality")


def corollary_pipeline(kind: str, prod: ProductModel, K: Optional[float] = None,
                       theta: float = 0.5, tolerance: float = 1e-3,
                       classification_tol: float = 1e-2) -> CorollaryReport:
    """
    Replays a corollary reduction on the product: ambient equality of the
    witness, disintegration along vertical rays, equality on every needle,
    Gaussian classification of the needles, and Poincaré equality for the
    function the reduction produces.
    """
    if kind not in ("log_sobolev", "isoperimetric"):
        raise InvalidArgument(f"unknown corollary kind {kind!r}")
    K = prod.K if K is None else float(K)
    model, measure, grid = prod.model, prod.measure, prod.grid
    sample = np.zeros((1, model.dim)) if model.x_independent else prod.core_points(16)
    lam = reversibility_constant(model, sample, unit_directions(model.dim, 32))
    if lam > 1.0 + 1e-9:
        raise InvalidArgument(f"corollary pipelines need a reversible model (Λ_F = {lam:.6g})")

    report = CorollaryReport(kind=kind, K=K)

    def stage(name, value, tol, **detail):
        result = StageResult(name, float(value), tol, detail)
        report.stages.append(result)
        logger.info("%s/%s: %.3e (tol %.1e)", kind, name, result.value, tol)
        if not result.passed:
            raise StageFailure(name, result.value, tol, report.stages)

    t = grid.points[:, -1]
    decomposition = product_decomposition(prod)
    needles = list({id(n): n for n in decomposition.needles}.values())
    root = np.sqrt(K)

    if kind == "log_sobolev":
        rho_fn = lambda x: np.exp(root * np.asarray(x)[..., -1] - 0.5)
        ambient = log_sobolev_deficit(model, measure, grid, rho_fn(grid.points), K)
        stage("ambient_equality", abs(ambient.deficit), tolerance, **ambient.to_dict())
        errors = [verify_disintegration(decomposition, rho_fn),
                  verify_disintegration(decomposition, lambda x: rho_fn(x) * np.log(rho_fn(x)))]
        stage("disintegration", max(errors), tolerance, errors=errors)
        deficits = [needle_logsobolev_deficit(n, lambda s: np.exp(root * s - 0.5), K).deficit
                    for n in needles]
        stage("needle_equality", max(abs(d) for d in deficits), tolerance, deficits=deficits)
        u = root * t - 0.5
        slope = 0.0
    else:
        a = gaussian_quantile(K, theta)
        A = t <= a + 1e-12
        ambient = isoperimetric_deficit(model, measure, grid, A, K)
        stage("ambient_equality", abs(ambient.deficit), tolerance, **ambient.to_dict())
        theta = ambient.parameters["theta"]
        f = lambda x: (np.asarray(x)[..., -1] <= a + 1e-12).astype(float) - theta
        balance = needle_balance(decomposition, theta)
        error = verify_disintegration(decomposition, f)
        stage("disintegration", max(error, float(np.max(np.abs(balance)))), tolerance,
              relative_error=error, balance=float(np.max(np.abs(balance))))
        gaps = [needle_witness_gap(n, (-np.inf, a), K) for n in needles]
        competitors = [needle_isoperimetric_minimum(n, theta, K).profile_gap for n in needles]
        stage("needle_equality", max(abs(g) for g in gaps), tolerance, gaps=gaps,
              competitor_gaps=competitors)
        u = t
        grad = gradient_field(model, measure, grid, u)
        slope = float(np.max(np.abs(model.norm(grid.points, grad) - 1.0)))

    classes = [classify_equality_needle(n, K, tol=classification_tol) for n in needles]
    worst = max(c.max_deviation for c in classes)
    stage("needle_classification", worst if all(c.is_gaussian for c in classes) else np.inf,
          classification_tol, max_deviation=worst)

    poincare = poincare_deficit(model, measure, grid, u, K)
    stage("poincare_equality", max(abs(poincare.deficit), slope), tolerance,
          deficit=poincare.deficit, guiding_slope_residual=slope)
    return report
