"""
Curvature — Ricci, weighted Ricci and the Bochner identity.

    R^i_k(y) = 2∂_kG^i − y^j ∂_j∂_{y^k}G^i + 2G^j ∂_{y^j}∂_{y^k}G^i − ∂_{y^j}G^i ∂_{y^k}G^j
    Ric(y)   = R^i_i(y)
    Ψ        = ψ + ½ log det g_V               (m = e^{−Ψ} vol_{g_V})
    Ric_N(v) = Ric(v) + (Ψ∘η)''(0) − (Ψ∘η)'(0)²/(N − n),     η geodesic, η̇(0) = v

Ric_N(v) ≥ K F²(v) for all v is CD(K, N). Bochner:

    Δ^{∇u}[F²(∇u)/2] − d(Δu)(∇u) = Ric_∞(∇u) + ‖∇²u‖²_{HS(∇u)}
"""
from __future__ import annotations
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidArgument, ZeroSection
from .geometry import (
    NESTED_STEP, FieldLike, as_field, connection, divergence, geodesic_flow, hessian,
    jacobian, linearized_laplacian, spray_coefficients, step_size,
)
from .norms import FinslerModel, ModelKind, legendre_batch, unit_directions

logger = logging.getLogger(__name__)

_SECOND = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_FIRST5 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


def christoffel(model: FinslerModel, x) -> np.ndarray:
    """Γ^i_jk of a Riemannian chart, shape (..., n, n, n)."""
    if model.metric_fn is None or model.metric_dx_fn is None:
        raise InvalidArgument("christoffel symbols need a Riemannian chart with ∂g")
    x = np.asarray(x, dtype=float)
    g_inv = np.linalg.inv(model.metric_fn(x))
    dg = model.metric_dx_fn(x)                      # [..., l, i, j] = ∂_l g_ij
    # lowered Γ_ljk = ½(∂_j g_lk + ∂_k g_lj − ∂_l g_jk)
    lowered = 0.5 * (np.swapaxes(dg, -3, -2) + np.moveaxis(dg, -3, -1) - dg)
    return np.einsum("...il,...ljk->...ijk", g_inv, lowered)


def riemannian_ricci(model: FinslerModel, x, v) -> float:
    """R_jk v^j v^k from Christoffel symbols and their finite differences."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    n = model.dim
    gamma = christoffel(model, x)

    def flat_gamma(y):
        G = christoffel(model, y)
        return G.reshape(G.shape[:-3] + (n ** 3,))

    dgamma = jacobian(flat_gamma, x, step_size(x)).reshape(n, n, n, n)   # [i, j, k, l] = ∂_l Γ^i_jk
    R = (np.einsum("ijki->jk", dgamma) - np.einsum("iijk->jk", dgamma)
         + np.einsum("iip,pjk->jk", gamma, gamma) - np.einsum("ikp,pij->jk", gamma, gamma))
    return float(v @ R @ v)


def ricci(model: FinslerModel, x, y) -> float:
    """Ric(y) from the spray; agrees with the Ricci of g_V for any geodesic extension V."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not np.any(y):
        raise ZeroSection("ricci curvature needs a nonzero direction", point=x)
    n = model.dim
    if model.x_independent:
        return 0.0
    hx = step_size(x)
    hy = NESTED_STEP * np.linalg.norm(y)

    def N_at(z):
        zs = z[..., None, None, :]
        N = jacobian(lambda w: spray_coefficients(model, zs, w), y, hy)
        return N.reshape(N.shape[:-2] + (n * n,))

    G = spray_coefficients(model, x, y)
    dxG = jacobian(lambda z: spray_coefficients(model, z, y), x, hx)           # [i, k]
    N = jacobian(lambda w: spray_coefficients(model, x, w), y, hy)              # [i, k]
    dxN = jacobian(N_at, x, hx).reshape(n, n, n)                                # [i, k, j]
    gamma = connection(model, x, y)                                             # [i, j, k]
    value = (2.0 * np.trace(dxG) - np.einsum("j,iij->", y, dxN)
             + 2.0 * np.einsum("j,iji->", G, gamma) - np.trace(N @ N))
    return float(value)


def psi_derivatives(model: FinslerModel, measure, x, v, h: float = NESTED_STEP):
    """(Ψ∘η)'(0) and (Ψ∘η)''(0) along the geodesic η with η̇(0) = v."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    samples = []
    for t in (-2 * h, -h, 0.0, h, 2 * h):
        if t == 0.0:
            xt, vt = x, v
        else:
            xt, vt = geodesic_flow(model, x, v, t, steps=4 * int(round(abs(t) / h)))
        samples.append(float(measure.log_density(xt)) + 0.5 * np.linalg.slogdet(model.tensor(xt, vt))[1])
    samples = np.array(samples)
    return float(_FIRST5 @ samples / h), float(_SECOND @ samples / h ** 2)


def _check_dimension(N: float, n: int) -> None:
    if np.isfinite(N) and 0.0 <= N <= n:
        raise InvalidArgument(f"N must lie in (−∞, 0) ∪ ({n}, ∞], got {N}")


def weighted_ricci(model: FinslerModel, measure, x, v, N: float = np.inf) -> float:
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    n = model.dim
    _check_dimension(N, n)
    if not np.any(v):
        raise ZeroSection("weighted ricci needs a nonzero direction", point=x)
    speed = float(model.norm(x, v))
    unit = v / speed
    if model.kind is ModelKind.RIEMANNIAN and model.metric_dx_fn is not None:
        base = riemannian_ricci(model, x, unit)
    else:
        base = ricci(model, x, unit)
    d1, d2 = psi_derivatives(model, measure, x, unit)
    value = base + d2
    if np.isfinite(N):
        value -= d1 * d1 / (N - n)
    return value * speed ** 2


def ricci_lower_bound(model: FinslerModel, measure, points: Sequence, N: float = np.inf,
                      count: int = 16) -> float:
    """min Ric_N(v)/F²(v) over points × unit directions: the sampled CD constant."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dirs = unit_directions(model.dim, count)
    worst = np.inf
    for x in pts:
        for d in dirs:
            worst = min(worst, weighted_ricci(model, measure, x, d, N) / float(model.norm(x, d)) ** 2)
    return float(worst)


@dataclass(frozen=True)
class BochnerTerms:
    point: np.ndarray
    laplacian_of_energy: float     # Δ^{∇u}[F²(∇u)/2]
    laplacian_derivative: float    # d(Δu)(∇u)
    ricci: float                   # Ric_∞(∇u)
    hessian_hs2: float             # ‖∇²u‖²_{HS(∇u)}
    laplacian: float               # Δu
    dpsi: float                    # dΨ(∇u)
    dim: int

    @property
    def lhs(self) -> float:
        return self.laplacian_of_energy - self.laplacian_derivative

    @property
    def rhs(self) -> float:
        return self.ricci + self.hessian_hs2

    @property
    def residual(self) -> float:
        return self.lhs - self.rhs

    @property
    def trace_bound(self) -> float:
        """(Δu + dΨ(∇u))²/n, a lower bound for the Hessian norm."""
        return (self.laplacian + self.dpsi) ** 2 / self.dim


def bochner_terms(model: FinslerModel, measure, u: FieldLike, x) -> BochnerTerms:
    u = as_field(u)
    x = np.asarray(x, dtype=float)
    if not np.any(np.abs(u.d(x)) > 1e-14):
        raise ZeroSection("bochner formula is evaluated on du ≠ 0", point=x)

    def grad(y):
        return legendre_batch(model, y, u.d(y))

    def half_energy(y):
        return 0.5 * model.norm(y, grad(y)) ** 2

    def lap(y):
        return divergence(measure, grad, y)

    def big_psi(y):
        return measure.log_density(y) + 0.5 * np.linalg.slogdet(model.tensor(y, grad(y)))[1]

    g0 = grad(x)
    h = step_size(x)
    terms = BochnerTerms(
        point=x,
        laplacian_of_energy=float(linearized_laplacian(model, measure, grad, half_energy, x)),
        laplacian_derivative=float(jacobian(lap, x, h) @ g0),
        ricci=weighted_ricci(model, measure, x, g0),
        hessian_hs2=hessian(model, u, x).hs_norm2,
        laplacian=float(lap(x)),
        dpsi=float(jacobian(big_psi, x, h) @ g0),
        dim=model.dim,
    )
    logger.debug("bochner at %s: lhs=%.8g rhs=%.8g", x, terms.lhs, terms.rhs)
    return terms


def bochner_residual(model: FinslerModel, measure, u: FieldLike, x) -> float:
    """LHS − RHS of the Bochner identity, each term computed independently."""
    return bochner_terms(model, measure, u, x).residual
