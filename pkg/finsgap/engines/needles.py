"""
Needles — one-dimensional CD(K,∞) measures and the localization they carry.

A needle is an interval I with m_η = e^{−ψ(t)} dt. On a line Ric ≡ 0, so
Ric_∞ = ψ'' and CD(K,∞) ⇔ ψ'' ≥ K. Gaussian needles (ψ'' ≡ K) are the
equality cases of the 1D spectral gap, log-Sobolev and isoperimetric bounds.

A needle decomposition of (M, m) along a 1-Lipschitz guiding function φ
disintegrates ∫_M f dm = ∫_Q ∫_{I_η} f dm_η dν(η) over transport rays η,
on which φ(η(t)) − φ(η(s)) = t − s = d(η(s), η(t)).
"""
from __future__ import annotations
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import eigh_tridiagonal

from ..core.errors import InvalidArgument, InvalidDecomposition
from ..core.geometry import distance
from ..core.grid import Grid
from ..core.measure import WeightedMeasure, potential_measure
from ..core.norms import FinslerModel
from ..core.parallel import parallel_map
from ..manifolds.riemannian import euclidean
from .inequalities import DeficitReport, gaussian_profile, log_sobolev_deficit

logger = logging.getLogger(__name__)

LineFn = Callable[[np.ndarray], np.ndarray]
CD_SLACK = 1e-8


class Needle:
    """A probability needle sampled on a uniform node set."""

    def __init__(self, psi: LineFn, nodes: np.ndarray, psi_dd: Optional[LineFn] = None,
                 name: str = "needle", params: Optional[Dict] = None):
        self.nodes = np.asarray(nodes, dtype=float)
        if self.nodes.ndim != 1 or self.nodes.size < 3:
            raise InvalidArgument("a needle needs at least three nodes")
        self.grid = Grid.line(float(self.nodes[0]), float(self.nodes[-1]), self.nodes.size)
        self.psi = psi
        self.psi_dd = psi_dd
        self.name = name
        self.params = params or {}

    @property
    def lo(self) -> float:
        return float(self.nodes[0])

    @property
    def hi(self) -> float:
        return float(self.nodes[-1])

    @property
    def spacing(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    @property
    def weights(self) -> np.ndarray:
        return self.grid.weights

    def density(self, t) -> np.ndarray:
        return np.exp(-np.asarray(self.psi(np.asarray(t, dtype=float)), dtype=float))

    @cached_property
    def masses(self) -> np.ndarray:
        return self.weights * self.density(self.nodes)

    @property
    def mass(self) -> float:
        return float(self.masses.sum())

    @cached_property
    def measure(self) -> WeightedMeasure:
        psi = self.psi
        return potential_measure(1, lambda x: psi(np.asarray(x)[..., 0]), name=self.name,
                                 **self.params)

    @cached_property
    def model(self) -> FinslerModel:
        return euclidean(1)

    def integrate(self, f: Union[LineFn, np.ndarray]) -> float:
        values = f(self.nodes) if callable(f) else np.asarray(f, dtype=float)
        return float(self.masses @ values)

    @cached_property
    def _cumulative(self) -> np.ndarray:
        return cumulative_trapezoid(self.density(self.nodes), self.nodes, initial=0.0)

    def cdf(self, t: float) -> float:
        """m_η((−∞, t]) with ρ linear between nodes."""
        if t <= self.lo:
            return 0.0
        if t >= self.hi:
            return float(self._cumulative[-1])
        i = min(int((t - self.lo) // self.spacing), self.nodes.size - 2)
        t0 = self.nodes[i]
        r0, r1 = self.density(self.nodes[i:i + 2])
        s = t - t0
        rt = r0 + (r1 - r0) * s / self.spacing
        return float(self._cumulative[i] + 0.5 * s * (r0 + rt))

    def quantile(self, theta: float) -> float:
        if not 0.0 < theta < 1.0:
            raise InvalidArgument(f"θ must lie in (0, 1), got {theta}")
        return float(optimize.brentq(lambda t: self.cdf(t) - theta, self.lo, self.hi,
                                     xtol=1e-14, rtol=1e-15, maxiter=200))

    def second_derivative(self) -> np.ndarray:
        """ψ'' at the nodes, closed form when known."""
        if self.psi_dd is not None:
            return np.broadcast_to(np.asarray(self.psi_dd(self.nodes), dtype=float), self.nodes.shape)
        h = self.spacing
        t = self.nodes
        return (self.psi(t + h) - 2.0 * self.psi(t) + self.psi(t - h)) / h ** 2

    def curvature_bound(self) -> float:
        return float(np.min(self.second_derivative()))

    def is_cd(self, K: float) -> bool:
        return self.curvature_bound() >= K - CD_SLACK

    def describe(self) -> Dict:
        return {"name": self.name, "lo": self.lo, "hi": self.hi, "nodes": int(self.nodes.size),
                "mass": self.mass, **self.params}


def make_needle(psi: LineFn, interval: Tuple[float, float], nodes: int = 2001,
                psi_dd: Optional[LineFn] = None, name: str = "needle", **params) -> Needle:
    """Probability needle: ψ shifted by the log of its quadrature mass."""
    lo, hi = interval
    if not np.isfinite(lo) or not np.isfinite(hi) or not lo < hi:
        raise InvalidArgument("needle interval must be a finite (lo, hi) with lo < hi")
    t = np.linspace(lo, hi, nodes)
    raw = Needle(psi, t)
    shift = float(np.log(raw.mass))
    return Needle(lambda s: psi(s) + shift, t, psi_dd=psi_dd, name=name,
                  params={**params, "log_mass_shift": shift})


def make_gaussian_needle(K: float = 1.0, R: Optional[float] = None, nodes: int = 2001,
                         center: float = 0.0) -> Needle:
    """γ_K on [c − R, c + R], R = 8/√K unless given."""
    if not K > 0:
        raise InvalidArgument("gaussian needle needs K > 0")
    R = 8.0 / np.sqrt(K) if R is None else float(R)
    if R < 6.0 / np.sqrt(K):
        raise InvalidArgument(f"truncation radius {R} is below 6/√K")
    log_norm = 0.5 * np.log(2.0 * np.pi / K)
    return make_needle(lambda t: 0.5 * K * (t - center) ** 2 + log_norm, (center - R, center + R),
                       nodes, psi_dd=lambda t: np.full(np.shape(t), float(K)),
                       name="gaussian", K=K, R=R, center=center)


def make_quartic_needle(s: float, K: float = 1.0, R: Optional[float] = None,
                        nodes: int = 2001) -> Needle:
    """ψ = Kt²/2 + s·t⁴, CD(K,∞) for s ≥ 0."""
    if s < 0:
        raise InvalidArgument("quartic needle needs s ≥ 0")
    R = 8.0 / np.sqrt(K) if R is None else float(R)
    return make_needle(lambda t: 0.5 * K * t ** 2 + s * t ** 4, (-R, R), nodes,
                       psi_dd=lambda t: K + 12.0 * s * t ** 2,
                       name="quartic", K=K, s=s, R=R)


# ── 1D solvers ──────────────────────────────────────────────────────────

@dataclass
class NeedleSpectrum:
    eigenvalue: float
    eigenfunction: np.ndarray
    K: float

    @property
    def deficit(self) -> float:
        return self.eigenvalue - self.K

    def to_dict(self) -> Dict:
        return {"eigenvalue": self.eigenvalue, "K": self.K, "deficit": self.deficit}


def needle_poincare(needle: Needle, K: float) -> NeedleSpectrum:
    """
    −(e^{−ψ}u')' = λ e^{−ψ}u with zero flux at the ends, discretized exactly as
    the grid Laplacian: stiffness ρ(t_{i+½})/h per edge, lumped masses.
    """
    if not needle.is_cd(K):
        logger.warning("needle %s is not CD(%g,∞): min ψ'' = %.6g", needle.name, K,
                       needle.curvature_bound())
    t = needle.nodes
    h = needle.spacing
    edge = needle.density(0.5 * (t[:-1] + t[1:])) / h
    mass = needle.masses
    diag = np.zeros(t.size)
    diag[:-1] += edge
    diag[1:] += edge
    root = np.sqrt(mass)
    d = diag / mass
    e = -edge / (root[:-1] * root[1:])
    values, vectors = eigh_tridiagonal(d, e, select="i", select_range=(0, 1))
    u = vectors[:, 1] / root
    u = u - float(mass @ u) / mass.sum()
    u = u / np.sqrt(float(mass @ u ** 2) / mass.sum())
    if u[-1] < u[0]:
        u = -u
    return NeedleSpectrum(eigenvalue=float(values[1]), eigenfunction=u, K=K)


def needle_logsobolev_deficit(needle: Needle, rho, K: float) -> DeficitReport:
    values = rho(needle.nodes) if callable(rho) else np.asarray(rho, dtype=float)
    return log_sobolev_deficit(needle.model, needle.measure, needle.grid, values, K)


@dataclass
class IsoperimetricMinimum:
    content: float
    minimizer_type: str          # left_half_line | right_half_line | interval
    boundary: Tuple[float, ...]
    theta: float
    competitors: Dict[str, float]
    profile_gap: Optional[float] = None

    def to_dict(self) -> Dict:
        return {"content": self.content, "minimizer_type": self.minimizer_type,
                "boundary": list(self.boundary), "theta": self.theta,
                "competitors": dict(self.competitors), "profile_gap": self.profile_gap}


def needle_isoperimetric_minimum(needle: Needle, theta: float,
                                 K: Optional[float] = None) -> IsoperimetricMinimum:
    """
    Least boundary density among half-lines and single intervals of mass θ.
    With K, profile_gap is the minimum minus ℐ_{K,∞,∞}(θ).
    """
    if not 0.0 < theta < 1.0:
        raise InvalidArgument(f"θ must lie in (0, 1), got {theta}")
    a = needle.quantile(theta)
    b = needle.quantile(1.0 - theta)
    rho = lambda t: float(needle.density(t))
    candidates = [
        ("left_half_line", rho(a), (a,)),
        ("right_half_line", rho(b), (b,)),
    ]

    def interval_content(lo):
        hi = needle.quantile(min(needle.cdf(lo) + theta, 1.0 - 1e-15))
        return rho(lo) + rho(hi)

    left_end = needle.nodes[1]
    right_end = b - needle.spacing
    if right_end > left_end:
        res = optimize.minimize_scalar(interval_content, bounds=(left_end, right_end),
                                       method="bounded", options={"xatol": 1e-10})
        lo = float(res.x)
        hi = needle.quantile(min(needle.cdf(lo) + theta, 1.0 - 1e-15))
        candidates.append(("interval", float(res.fun), (lo, hi)))
    kind, content, boundary = candidates[0]
    for c in candidates[1:]:
        if c[1] < content - 1e-12:
            kind, content, boundary = c
    gap = None if K is None else content - gaussian_profile(K, theta)
    return IsoperimetricMinimum(content, kind, boundary, theta,
                                competitors={c[0]: c[1] for c in candidates}, profile_gap=gap)


def needle_set_content(needle: Needle, interval: Tuple[float, float]) -> float:
    """m_η⁺ of the interval: the density at each endpoint interior to the needle."""
    lo, hi = interval
    if not lo < hi:
        raise InvalidArgument("needle set must be an interval (lo, hi) with lo < hi")
    return float(sum(needle.density(e) for e in (lo, hi) if needle.lo < e < needle.hi))


def needle_witness_gap(needle: Needle, interval: Tuple[float, float], K: float) -> float:
    """m_η⁺(A_η) − ℐ_{K,∞,∞}(m_η(A_η)) for A_η = interval ∩ I_η."""
    lo, hi = interval
    theta = needle.cdf(min(hi, needle.hi)) - needle.cdf(max(lo, needle.lo))
    if not 0.0 < theta < 1.0:
        raise InvalidArgument(f"needle set has measure {theta:.3g}, outside (0, 1)")
    return needle_set_content(needle, interval) - gaussian_profile(K, theta)


@dataclass
class EqualityClassification:
    is_gaussian: bool
    max_deviation: float
    center: float
    centered_residual: float
    tolerance: float

    def to_dict(self) -> Dict:
        return {"is_gaussian": self.is_gaussian, "max_deviation": self.max_deviation,
                "center": self.center, "centered_residual": self.centered_residual,
                "tolerance": self.tolerance}


def classify_equality_needle(needle: Needle, K: float, tol: float = 1e-2) -> EqualityClassification:
    """
    Gaussian iff ψ'' ≡ K within tol and, in the coordinate s = t − c centered at
    the minimizer c of ψ, ψ(t) − ψ(c) = K s²/2 within tol on |s| ≤ 4/√K.
    """
    if not K > 0:
        raise InvalidArgument("classification needs K > 0")
    t = needle.nodes
    psi = np.asarray(needle.psi(t), dtype=float)
    i = int(np.argmin(psi))
    center = float(t[i])
    if 0 < i < t.size - 1:
        curvature = psi[i - 1] - 2.0 * psi[i] + psi[i + 1]
        if curvature > 0:
            center -= 0.5 * needle.spacing * (psi[i + 1] - psi[i - 1]) / curvature
    deviation = float(np.max(np.abs(needle.second_derivative() - K)))
    s = t - center
    core = np.abs(s) <= 4.0 / np.sqrt(K)
    psi_c = float(needle.psi(np.array([center]))[0])
    centered = float(np.max(np.abs(psi[core] - psi_c - 0.5 * K * s[core] ** 2)))
    return EqualityClassification(is_gaussian=deviation <= tol and centered <= tol,
                                  max_deviation=deviation, center=center,
                                  centered_residual=centered, tolerance=tol)


# ── Decompositions ──────────────────────────────────────────────────────

RayFn = Callable[[int, np.ndarray], np.ndarray]


class NeedleDecomposition:
    """
    A disintegration supplied analytically: index points q with weights ν,
    one needle per q and a ray map (q, t) ↦ η_q(t) in the ambient chart.
    """

    def __init__(self, model: FinslerModel, measure: WeightedMeasure, grid: Grid,
                 guiding: Callable[[np.ndarray], np.ndarray], index_points: np.ndarray,
                 index_weights: np.ndarray, needles: Sequence[Needle], ray: RayFn):
        self.model = model
        self.measure = measure
        self.grid = grid
        self.guiding = guiding
        self.index_points = np.atleast_2d(np.asarray(index_points, dtype=float))
        weights = np.asarray(index_weights, dtype=float)
        if weights.size != len(self.index_points) or len(needles) != weights.size:
            raise InvalidArgument("decomposition needs one weight and one needle per index point")
        self.index_weights = weights / weights.sum()
        self.needles: List[Needle] = list(needles)
        self.ray = ray

    @property
    def size(self) -> int:
        return len(self.needles)

    @cached_property
    def ray_residuals(self) -> Dict[int, float]:
        return transport_ray_residuals(self)

    @property
    def ray_residual(self) -> float:
        return max(self.ray_residuals.values())

    def support_excess(self, tol: float = 1e-6) -> float:
        """
        Worst needle mass off its ray: nodes mapped outside the chart box, or
        where φ(η(t)) − φ(η(t₀)) departs from t − t₀ by more than tol.
        """
        worst = 0.0
        for q, needle in enumerate(self.needles):
            pts = self.ray(q, needle.nodes)
            inside = np.asarray(self.grid.contains(pts), dtype=bool)
            phi = np.asarray(self.guiding(pts), dtype=float)
            on_ray = np.abs(phi - phi[0] - (needle.nodes - needle.nodes[0])) <= tol
            worst = max(worst, float(needle.masses[~(inside & on_ray)].sum()))
        return worst


def product_decomposition(product, guiding: Optional[Callable] = None) -> NeedleDecomposition:
    """
    Vertical rays t ↦ (σ, t) of Σ × ℝ with φ(σ, t) = t: Q ≅ Σ with ν = m_Σ,
    and every needle is the ℝ factor's measure on the grid's t nodes.
    """
    grid = product.grid
    k = grid.dim - 1
    t_axis = grid.axes[-1]
    sigma_grid = Grid(grid.axes[:-1])
    sigma_points = sigma_grid.points
    sigma_weights = sigma_grid.weights * product.sigma_measure.density(sigma_points)
    line_psi = product.line_measure.psi
    needle = make_needle(lambda t: line_psi(np.asarray(t)[..., None]), (t_axis.lo, t_axis.hi),
                         t_axis.count, psi_dd=lambda t: np.full(np.shape(t), float(product.K)),
                         name="gaussian", K=product.K)

    def ray(q, t):
        t = np.asarray(t, dtype=float)
        base = np.broadcast_to(sigma_points[q], t.shape + (k,))
        return np.concatenate([base, t[..., None]], axis=-1)

    phi = guiding or (lambda x: np.asarray(x)[..., -1])
    return NeedleDecomposition(product.model, product.measure, grid, phi, sigma_points,
                               sigma_weights, [needle] * len(sigma_points), ray)


def transport_ray_residuals(decomposition: NeedleDecomposition, rays: int = 4,
                            fractions: Sequence[float] = (0.4, 0.5, 0.6)) -> Dict[int, float]:
    """
    Worst |φ(η(t)) − φ(η(s)) − (t − s)| and |d(η(s), η(t)) − (t − s)| over
    ordered triples on a few rays, all three pairs of each triple.
    """
    picks = np.unique(np.linspace(0, decomposition.size - 1, min(rays, decomposition.size)).astype(int))

    def residual(q):
        needle = decomposition.needles[q]
        ts = needle.lo + np.asarray(fractions) * (needle.hi - needle.lo)
        pts = decomposition.ray(q, ts)
        phi = np.asarray(decomposition.guiding(pts), dtype=float)
        worst = 0.0
        for i in range(len(ts)):
            for j in range(i + 1, len(ts)):
                gap = ts[j] - ts[i]
                worst = max(worst, abs(phi[j] - phi[i] - gap))
                worst = max(worst, abs(distance(decomposition.model, pts[i], pts[j]) - gap))
        return worst

    return dict(zip(picks.tolist(), parallel_map(residual, picks)))


def check_transport_rays(decomposition: NeedleDecomposition) -> float:
    return decomposition.ray_residual


def verify_disintegration(decomposition: NeedleDecomposition, phi_test: Callable,
                          tol: float = 1e-6) -> float:
    """|∫φ dm − ∫_Q ∫ φ dm_η dν| / |∫φ dm|, with ∫|φ| dm as the scale when ∫φ dm = 0."""
    ray, worst = max(decomposition.ray_residuals.items(), key=lambda item: item[1])
    if worst > tol:
        raise InvalidDecomposition(f"ray {ray} violates the transport-ray identities",
                                   ray=ray, residual=worst)
    excess = decomposition.support_excess()
    if excess > 1e-12:
        raise InvalidDecomposition("needle mass outside its ray", residual=excess)
    grid = decomposition.grid
    masses = grid.weights * decomposition.measure.density(grid.points)
    values = np.asarray(phi_test(grid.points), dtype=float)
    ambient = float(masses @ values) / float(masses.sum())
    scale = float(masses @ np.abs(values)) / float(masses.sum())

    def inner(q):
        needle = decomposition.needles[q]
        return needle.integrate(np.asarray(phi_test(decomposition.ray(q, needle.nodes)), dtype=float))

    iterated = float(decomposition.index_weights @ np.array(parallel_map(inner, range(decomposition.size))))
    denom = abs(ambient) if abs(ambient) > 1e-12 * max(scale, 1e-300) else scale
    if denom == 0.0:
        return abs(ambient - iterated)
    return abs(ambient - iterated) / denom


def needle_balance(decomposition: NeedleDecomposition, theta: float) -> np.ndarray:
    """
    Per-needle ∫(1_A − θ) dm_η for A = {φ ≤ a}, a the θ-quantile of φ under m
    obtained from the iterated cdf.
    """
    if not 0.0 < theta < 1.0:
        raise InvalidArgument(f"θ must lie in (0, 1), got {theta}")
    needles = decomposition.needles
    nu = decomposition.index_weights
    lo = min(n.lo for n in needles)
    hi = max(n.hi for n in needles)

    def ambient_cdf(a):
        return float(sum(w * n.cdf(a) for w, n in zip(nu, needles)))

    a = optimize.brentq(lambda s: ambient_cdf(s) - theta, lo, hi, xtol=1e-14, rtol=1e-15)
    return np.array([n.cdf(a) - theta for n in needles])


def needle_profile_gap(needle: Needle, theta: float, K: float) -> float:
    """content of the best competitor minus ℐ_{K,∞,∞}(θ)."""
    return needle_isoperimetric_minimum(needle, theta, K).profile_gap
