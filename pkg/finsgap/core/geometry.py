"""
Geometry — sprays, geodesics, distance and the Chern connection.

    ẍ = g_ẋ⁻¹ (∂_x L − (∂_x p) ẋ)           Euler–Lagrange equations of L = F²/2
    G^i = −½ ẍ^i                            spray coefficients, 2-homogeneous in ẋ
    Γ^i_jk(w) = ∂²G^i/∂y^j∂y^k (w)          connection coefficients, 0-homogeneous in w
    D_v^w X = (v^j ∂_j X^i + Γ^i_jk(w) v^j X^k) ∂_i

Berwald ⇔ G quadratic in y ⇔ Γ independent of the reference vector.
"""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import optimize

from .errors import DomainExit, FinsgapError, InvalidArgument, ModelDegenerate, ZeroSection
from .norms import FinslerModel, legendre_batch, unit_directions

logger = logging.getLogger(__name__)

_STENCIL = np.array([-2.0, -1.0, 1.0, 2.0])
_FIRST = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
NESTED_STEP = 2e-3


def step_size(x, base: float = NESTED_STEP) -> np.ndarray:
    return base * (1.0 + np.linalg.norm(np.asarray(x, dtype=float), axis=-1))


def jacobian(fn: Callable, x, h) -> np.ndarray:
    """
    J[..., i, k] = ∂f_i/∂x^k by the fourth-order central stencil.
    `fn` must be vectorized over leading axes; scalar-valued fn gives (..., n).
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    h = np.asarray(h, dtype=float)[..., None, None, None]
    pts = x[..., None, None, :] + h * _STENCIL[:, None, None] * np.eye(n)
    vals = np.asarray(fn(pts), dtype=float)
    scalar = vals.ndim == pts.ndim - 1
    if scalar:
        vals = vals[..., None]
    d = np.einsum("c,...ckm->...mk", _FIRST, vals) / h[..., 0]
    return d[..., 0, :] if scalar else d


# ── Sprays ──────────────────────────────────────────────────────────────

def spray_batch(model: FinslerModel, x, v) -> np.ndarray:
    """Geodesic acceleration at (x, v); zero on the zero section."""
    x, v = model._broadcast(x, v)
    out = np.zeros(v.shape)
    if model.x_independent:
        return out
    live = np.any(v != 0.0, axis=-1)
    if not live.any():
        return out
    xs, vs = x[live], v[live]
    rhs = model.lagrangian_dx(xs, vs) - np.einsum("...ik,...k->...i", model.flat_dx(xs, vs), vs)
    try:
        out[live] = np.linalg.solve(model.tensor(xs, vs), rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise ModelDegenerate("singular fundamental tensor in spray") from exc
    return out


def spray(model: FinslerModel, x, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if not np.any(v):
        raise ZeroSection("spray is taken on nonzero vectors", point=x)
    return spray_batch(model, x, v)


def spray_coefficients(model: FinslerModel, x, y) -> np.ndarray:
    """G^i(x, y) = −½ ẍ^i."""
    return -0.5 * spray_batch(model, x, y)


# ── Geodesics ───────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Geodesic:
    times: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    speed: float

    @property
    def endpoint(self) -> np.ndarray:
        return self.points[-1]

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def speeds(self, model: FinslerModel) -> np.ndarray:
        return model.norm(self.points, self.velocities)

    def speed_drift(self, model: FinslerModel) -> float:
        return float(np.max(np.abs(self.speeds(model) - self.speed)) / self.speed)


def _rk4(model, x, v, dt):
    k1x, k1v = v, spray_batch(model, x, v)
    k2x, k2v = v + 0.5 * dt * k1v, spray_batch(model, x + 0.5 * dt * k1x, v + 0.5 * dt * k1v)
    k3x, k3v = v + 0.5 * dt * k2v, spray_batch(model, x + 0.5 * dt * k2x, v + 0.5 * dt * k2v)
    k4x, k4v = v + dt * k3v, spray_batch(model, x + dt * k3x, v + dt * k3v)
    return (x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x),
            v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v))


def geodesic_flow(model: FinslerModel, x, v, t: float, steps: int = 8):
    """(x, v) flowed for time t (negative t runs backwards); vectorized, no domain check."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    dt = t / steps
    for _ in range(steps):
        x, v = _rk4(model, x, v, dt)
    return x, v


def _integrate(model, x0, v0, T, steps, substeps, speed):
    dt = T / (steps * substeps)
    xs, vs = [x0], [v0]
    x, v = x0, v0
    for i in range(steps):
        for _ in range(substeps):
            x, v = _rk4(model, x, v, dt)
        if not np.all(np.isfinite(x)) or not model.in_domain(x):
            partial = Geodesic(np.linspace(0.0, i * T / steps, len(xs)), np.array(xs),
                               np.array(vs), speed)
            raise DomainExit(f"geodesic left the chart domain at t={(i + 1) * T / steps:.4g}",
                             partial=partial)
        xs.append(x)
        vs.append(v)
    return Geodesic(np.linspace(0.0, T, steps + 1), np.array(xs), np.array(vs), speed)


def integrate_geodesic(model: FinslerModel, x0, v0, T: float = 1.0, steps: int = 64,
                       tol: float = 1e-6, max_substeps: int = 64) -> Geodesic:
    """
    Classical RK4 on (x, ẋ). Each of the `steps` sample intervals is subdivided
    until the relative speed drift is below tol·max(T, 1).
    """
    if steps < 16:
        raise InvalidArgument("integrate_geodesic needs at least 16 steps")
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if not np.any(v0):
        raise ZeroSection("geodesics start from a nonzero velocity", point=x0)
    speed = float(model.norm(x0, v0))
    substeps = 1
    while True:
        geo = _integrate(model, x0, v0, float(T), steps, substeps, speed)
        drift = geo.speed_drift(model)
        if drift <= tol * max(abs(T), 1.0) or substeps >= max_substeps:
            break
        substeps *= 2
    logger.debug("geodesic: T=%g steps=%d substeps=%d drift=%.2e", T, steps, substeps, drift)
    return geo


def exponential_map(model: FinslerModel, x, v) -> np.ndarray:
    return integrate_geodesic(model, x, v, 1.0).endpoint


def geodesic_residual(model: FinslerModel, geodesic: Geodesic) -> float:
    """max |η̈ − spray(η, η̇)| = max |D_η̇^η̇ η̇| over interior samples."""
    v = geodesic.velocities
    if len(v) < 5:
        raise InvalidArgument("geodesic_residual needs at least five samples")
    dt = geodesic.times[1] - geodesic.times[0]
    acc = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12.0 * dt)
    return float(np.max(np.linalg.norm(acc - spray_batch(model, geodesic.points[2:-2], v[2:-2]), axis=-1)))


# ── Distance ────────────────────────────────────────────────────────────

def _bernstein(s: np.ndarray, degree: int) -> np.ndarray:
    k = np.arange(degree + 1)
    binom = np.array([math.comb(degree, j) for j in k], dtype=float)
    return binom * s[:, None] ** k * (1.0 - s[:, None]) ** (degree - k)


class _BezierFamily:
    """Bézier curves with pinned endpoints, length by composite Gauss–Legendre."""

    def __init__(self, model, x, y, control_points, nodes, panels):
        self.model = model
        self.x, self.y = x, y
        self.m = control_points
        g, w = np.polynomial.legendre.leggauss(nodes)
        edges = np.linspace(0.0, 1.0, panels + 1)
        s = np.concatenate([0.5 * (a + b) + 0.5 * (b - a) * g for a, b in zip(edges[:-1], edges[1:])])
        self.weights = np.concatenate([0.5 * (b - a) * w for a, b in zip(edges[:-1], edges[1:])])
        d = control_points - 1
        self.B = _bernstein(s, d)
        lower = _bernstein(s, d - 1)
        self.dB = np.zeros_like(self.B)
        self.dB[:, :-1] -= d * lower
        self.dB[:, 1:] += d * lower
        lo = np.array([b[0] for b in model.domain])
        hi = np.array([b[1] for b in model.domain])
        self.lo, self.hi = lo, hi

    def control(self, z: np.ndarray) -> np.ndarray:
        inner = z.reshape(self.m - 2, -1)
        return np.vstack([self.x, inner, self.y])

    def straight(self) -> np.ndarray:
        t = np.linspace(0.0, 1.0, self.m)[1:-1, None]
        return (self.x + t * (self.y - self.x)).ravel()

    def fit(self, points: np.ndarray) -> np.ndarray:
        s = np.linspace(0.0, 1.0, len(points))
        B = _bernstein(s, self.m - 1)
        rhs = points - B[:, :1] * self.x - B[:, -1:] * self.y
        inner, *_ = np.linalg.lstsq(B[:, 1:-1], rhs, rcond=None)
        return inner.ravel()

    def excess(self, ctrl: np.ndarray) -> float:
        pts = self.B @ ctrl
        over = np.maximum(self.lo - pts, 0.0) + np.maximum(pts - self.hi, 0.0)
        return float(np.sum(over * over))

    def length(self, ctrl: np.ndarray) -> float:
        return float(self.weights @ self.model.norm(self.B @ ctrl, self.dB @ ctrl))

    def objective(self, z: np.ndarray) -> float:
        ctrl = self.control(z)
        return self.length(ctrl) + 1e3 * self.excess(ctrl)


def _shoot(model, x, y, steps=32) -> Optional[Geodesic]:
    def miss(v):
        try:
            return integrate_geodesic(model, x, v, 1.0, steps).endpoint - y
        except (FinsgapError, np.linalg.LinAlgError):
            return np.full(x.shape, 1e6)

    try:
        sol = optimize.root(miss, y - x, method="hybr")
    except (FinsgapError, ValueError):
        return None
    if not sol.success or np.linalg.norm(miss(sol.x)) > 1e-8 * (1.0 + np.linalg.norm(y - x)):
        return None
    try:
        return integrate_geodesic(model, x, sol.x, 1.0, steps)
    except FinsgapError:
        return None


def distance(model: FinslerModel, x, y, control_points: int = 8, nodes: int = 16,
             panels: int = 4) -> float:
    """
    d(x, y) = inf ∫F(η̇) over curves from x to y, asymmetric in general.
    Seeds: the straight segment and a shooting geodesic; each is refined over
    the Bézier family and the shortest admissible curve wins.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (model.in_domain(x) and model.in_domain(y)):
        raise InvalidArgument("distance endpoints must lie in the chart domain")
    if np.array_equal(x, y):
        return 0.0
    family = _BezierFamily(model, x, y, control_points, nodes, panels)
    seeds = [family.straight()]
    geo = _shoot(model, x, y)
    if geo is not None:
        seeds.append(family.fit(geo.points))

    candidates = []
    if geo is not None:
        candidates.append(geo.speed)
    for z0 in seeds:
        ctrl0 = family.control(z0)
        if family.excess(ctrl0) == 0.0:
            candidates.append(family.length(ctrl0))
        res = optimize.minimize(family.objective, z0, method="BFGS",
                                options={"gtol": 1e-10, "maxiter": 400})
        ctrl = family.control(res.x)
        if family.excess(ctrl) == 0.0:
            candidates.append(family.length(ctrl))
    if not candidates:
        raise DomainExit("no connecting curve inside the chart domain", partial=seeds[0])
    return float(min(candidates))


# ── Connection and covariant derivatives ────────────────────────────────

def connection(model: FinslerModel, x, w) -> np.ndarray:
    """Γ^i_jk(w) as an (n, n, n) array indexed [i, j, k]."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if not np.any(w):
        raise ZeroSection("connection needs a nonzero reference vector", point=x)
    n = model.dim
    if model.x_independent:
        return np.zeros((n, n, n))
    h = NESTED_STEP * np.linalg.norm(w)

    def nonlinear(y):
        # N^i_j = ∂G^i/∂y^j, flattened to (..., n·n)
        N = jacobian(lambda z: spray_coefficients(model, x, z), y, h)
        return N.reshape(N.shape[:-2] + (n * n,))

    return jacobian(nonlinear, w, h).reshape(n, n, n)


def covariant_derivative(model: FinslerModel, x, v, w_ref, X: Callable) -> np.ndarray:
    """D_v^{w_ref} X at x."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    gamma = connection(model, x, w_ref)
    dX = jacobian(X, x, step_size(x))
    return dX @ v + np.einsum("ijk,j,k->i", gamma, v, np.asarray(X(x), dtype=float))


@dataclass(frozen=True)
class BerwaldReport:
    is_berwald: bool
    max_residual: float
    tolerance: float

    def to_dict(self) -> dict:
        return {"is_berwald": self.is_berwald, "max_residual": self.max_residual,
                "tolerance": self.tolerance}


def berwald_test(model: FinslerModel, points: Sequence, tol: float = 1e-6,
                 count: int = 24) -> BerwaldReport:
    """Fit G^i(x, ·) by quadratic forms on unit directions; report the worst misfit."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise InvalidArgument("berwald_test needs a nonempty sample")
    n = model.dim
    dirs = unit_directions(n, count)
    pairs = [(j, k) for j in range(n) for k in range(j, n)]
    design = np.stack([dirs[:, j] * dirs[:, k] for j, k in pairs], axis=-1)
    worst = 0.0
    for x in pts:
        G = spray_coefficients(model, x, dirs)
        coef, *_ = np.linalg.lstsq(design, G, rcond=None)
        worst = max(worst, float(np.max(np.abs(design @ coef - G))))
    return BerwaldReport(is_berwald=worst <= tol, max_residual=worst, tolerance=tol)


# ── Scalar fields, gradients and Hessians ───────────────────────────────

@dataclass(frozen=True)
class ScalarField:
    """A smooth function on the chart, optionally with its differential."""
    value: Callable[[np.ndarray], np.ndarray]
    differential: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""

    def __call__(self, x) -> np.ndarray:
        return self.value(np.asarray(x, dtype=float))

    def d(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.differential is not None:
            return np.broadcast_to(self.differential(x), x.shape).astype(float)
        return jacobian(self.value, x, step_size(x))


FieldLike = Union[ScalarField, Callable[[np.ndarray], np.ndarray]]


def as_field(u: FieldLike) -> ScalarField:
    return u if isinstance(u, ScalarField) else ScalarField(u)


def gradient(model: FinslerModel, u: FieldLike, x) -> np.ndarray:
    """∇u = ℒ*(du), zero off the essential domain."""
    u = as_field(u)
    x = np.asarray(x, dtype=float)
    return legendre_batch(model, x, u.d(x))


@dataclass(frozen=True)
class HessianAtPoint:
    point: np.ndarray
    gradient: np.ndarray
    matrix: np.ndarray        # column j = D_{e_j}^{∇u} ∇u
    tensor: np.ndarray        # g_{∇u}

    def apply(self, v) -> np.ndarray:
        return self.matrix @ np.asarray(v, dtype=float)

    def asymmetry(self, v, w) -> float:
        """|g(∇²u v, w) − g(v, ∇²u w)|."""
        v = np.asarray(v, dtype=float)
        w = np.asarray(w, dtype=float)
        g = self.tensor
        return float(abs(self.apply(v) @ g @ w - v @ g @ self.apply(w)))

    @property
    def hs_norm2(self) -> float:
        """‖∇²u‖²_{HS(∇u)} = tr((∇²u)²) for a g-self-adjoint map."""
        return float(np.trace(self.matrix @ self.matrix))

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))


def hessian(model: FinslerModel, u: FieldLike, x) -> HessianAtPoint:
    u = as_field(u)
    x = np.asarray(x, dtype=float)
    du = u.d(x)
    if not np.any(np.abs(du) > 1e-14):
        raise ZeroSection("hessian is defined on the essential domain du ≠ 0", point=x)

    def grad(y):
        return legendre_batch(model, y, u.d(y))

    g0 = grad(x)
    dV = jacobian(grad, x, step_size(x))
    gamma = connection(model, x, g0)
    matrix = dV + np.einsum("ijk,k->ij", gamma, g0)
    return HessianAtPoint(point=x, gradient=g0, matrix=matrix, tensor=model.tensor(x, g0))


def divergence(measure, X: Callable, x) -> np.ndarray:
    """div_m X = ∂_i X^i − X^i ∂_i ψ, vectorized over leading axes of x."""
    x = np.asarray(x, dtype=float)
    J = jacobian(X, x, step_size(x))
    return np.trace(J, axis1=-2, axis2=-1) - np.sum(measure.gradient(x) * X(x), axis=-1)


def linearized_laplacian(model: FinslerModel, measure, V: Callable, f: Callable, x) -> np.ndarray:
    """Δ^V f = div_m(g_V⁻¹ df) with V a nonvanishing vector field."""

    def flux(y):
        df = jacobian(f, y, step_size(y))
        return np.linalg.solve(model.tensor(y, V(y)), df[..., None])[..., 0]

    return divergence(measure, flux, x)
