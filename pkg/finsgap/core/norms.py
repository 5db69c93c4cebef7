"""
Norms — Finsler structures on a single coordinate chart.

    F : TM → [0, ∞)        positively 1-homogeneous, strongly convex on fibers
    g_v = ½ ∂²_v F²(v)      fundamental tensor, g_v(v, v) = F²(v)
    F*(α) = sup{α(v) : F(v) ≤ 1}
    ℒ*(α) = v with F(v) = F*(α), α(v) = F*(α)²     (Legendre transform)

All evaluators are vectorized: points and vectors are arrays of shape (..., n).
"""
from __future__ import annotations
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, Optional, Tuple, Union

import numpy as np

from .errors import InvalidArgument, ModelDegenerate, NumericalFailure, ZeroSection

logger = logging.getLogger(__name__)

PairFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
PointFn = Callable[[np.ndarray], np.ndarray]


class ModelKind(str, Enum):
    RIEMANNIAN = "riemannian"
    MINKOWSKI = "minkowski"
    RANDERS = "randers"
    PRODUCT = "product"


@dataclass(frozen=True)
class DerivativeScheme:
    """How v- and x-derivatives of F²/2 are obtained when no closed form exists."""
    kind: str = "closed_form"       # closed_form | central_difference
    step: float = 1e-5              # first derivatives: h = step·(1 + |v|)
    hessian_step: float = 1e-4      # second derivatives

    @property
    def newton_tol(self) -> float:
        return 1e-13 if self.kind == "closed_form" else 1e-10

    @property
    def homogeneity_tol(self) -> float:
        return 1e-10 if self.kind == "closed_form" else 1e-6


CLOSED_FORM = DerivativeScheme()
CENTRAL_DIFFERENCE = DerivativeScheme(kind="central_difference")


def _scaled_step(base: float, v: np.ndarray) -> np.ndarray:
    return base * (1.0 + np.linalg.norm(v, axis=-1))


@dataclass(frozen=True, eq=False)
class FinslerModel:
    """
    A Finsler structure on an n-dimensional chart.

    Only `norm_fn` is mandatory. Closed forms for the flat map ∂_v(F²/2),
    the fundamental tensor and the x-derivatives are used when supplied;
    everything else falls back to central differences of F²/2.
    """
    dim: int
    kind: ModelKind
    norm_fn: PairFn
    scheme: DerivativeScheme = CLOSED_FORM
    domain: Tuple[Tuple[float, float], ...] = ()
    name: str = ""
    x_independent: bool = False
    flat_fn: Optional[PairFn] = None
    tensor_fn: Optional[PairFn] = None
    lagrangian_dx_fn: Optional[PairFn] = None
    flat_dx_fn: Optional[PairFn] = None
    reference_metric: Optional[PointFn] = None      # Riemannian part: g (riemannian), a (randers)
    metric_fn: Optional[PointFn] = None             # riemannian only
    metric_dx_fn: Optional[PointFn] = None          # riemannian only, [..., k, i, j] = ∂_k g_ij
    one_form: Optional[PointFn] = None              # randers only
    factors: Tuple["FinslerModel", ...] = ()
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidArgument("dim must be a positive integer")
        if not self.domain:
            object.__setattr__(self, "domain", tuple((-np.inf, np.inf) for _ in range(self.dim)))
        if len(self.domain) != self.dim:
            raise InvalidArgument("domain box must have one (lo, hi) pair per axis")

    # ── Evaluation ──────────────────────────────────────────────────────

    def _broadcast(self, x, v) -> Tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        shape = np.broadcast_shapes(x.shape, v.shape)
        return np.broadcast_to(x, shape), np.broadcast_to(v, shape)

    def norm(self, x, v) -> np.ndarray:
        x, v = self._broadcast(x, v)
        return np.asarray(self.norm_fn(x, v), dtype=float)

    def lagrangian(self, x, v) -> np.ndarray:
        return 0.5 * self.norm(x, v) ** 2

    def flat(self, x, v) -> np.ndarray:
        """∂_v(F²/2) = g_v(v, ·)."""
        x, v = self._broadcast(x, v)
        if self.flat_fn is not None:
            return np.asarray(self.flat_fn(x, v), dtype=float)
        h = _scaled_step(self.scheme.step, v)[..., None, None]
        eye = np.eye(self.dim)
        xs = x[..., None, :]
        plus = self.lagrangian(xs, v[..., None, :] + h * eye)
        minus = self.lagrangian(xs, v[..., None, :] - h * eye)
        return (plus - minus) / (2.0 * h[..., 0])

    def tensor(self, x, v) -> np.ndarray:
        """g_ij(v) = ½ ∂²F²/∂v^i∂v^j, shape (..., n, n)."""
        x, v = self._broadcast(x, v)
        if self.tensor_fn is not None:
            return np.asarray(self.tensor_fn(x, v), dtype=float)
        n = self.dim
        h = _scaled_step(self.scheme.hessian_step, v)[..., None, None, None]
        eye = np.eye(n)
        ei = eye[:, None, :]
        ej = eye[None, :, :]
        xs = x[..., None, None, :]
        vs = v[..., None, None, :]
        L = self.lagrangian
        g = (L(xs, vs + h * (ei + ej)) - L(xs, vs + h * (ei - ej))
             - L(xs, vs - h * (ei - ej)) + L(xs, vs - h * (ei + ej))) / (4.0 * h[..., 0] ** 2)
        return 0.5 * (g + np.swapaxes(g, -1, -2))

    def lagrangian_dx(self, x, v) -> np.ndarray:
        """∂_x(F²/2), shape (..., n)."""
        x, v = self._broadcast(x, v)
        if self.x_independent:
            return np.zeros(x.shape)
        if self.lagrangian_dx_fn is not None:
            return np.asarray(self.lagrangian_dx_fn(x, v), dtype=float)
        h = _scaled_step(self.scheme.step, x)[..., None, None]
        eye = np.eye(self.dim)
        vs = v[..., None, :]
        plus = self.lagrangian(x[..., None, :] + h * eye, vs)
        minus = self.lagrangian(x[..., None, :] - h * eye, vs)
        return (plus - minus) / (2.0 * h[..., 0])

    def flat_dx(self, x, v) -> np.ndarray:
        """M[..., i, k] = ∂p_i/∂x^k where p = ∂_v(F²/2)."""
        x, v = self._broadcast(x, v)
        if self.x_independent:
            return np.zeros(x.shape + (self.dim,))
        if self.flat_dx_fn is not None:
            return np.asarray(self.flat_dx_fn(x, v), dtype=float)
        h = _scaled_step(self.scheme.step, x)[..., None, None]
        eye = np.eye(self.dim)
        vs = v[..., None, :]
        plus = self.flat(x[..., None, :] + h * eye, vs)
        minus = self.flat(x[..., None, :] - h * eye, vs)
        # plus[..., k, i]
        return np.swapaxes((plus - minus) / (2.0 * h), -1, -2)

    def initial_covector_guess(self, x, alpha) -> np.ndarray:
        """Dual of the Riemannian part, rescaled along its ray to the stationary length."""
        x, alpha = self._broadcast(x, alpha)
        if self.reference_metric is not None:
            a = self.reference_metric(x)
            v = np.linalg.solve(a, alpha[..., None])[..., 0]
        else:
            v = alpha.copy()
        F = self.norm(x, v)
        pair = np.einsum("...i,...i->...", alpha, v)
        scale = np.where(F > 0, np.abs(pair) / np.where(F > 0, F, 1.0) ** 2, 1.0)
        return v * scale[..., None]

    def in_domain(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo = np.array([b[0] for b in self.domain])
        hi = np.array([b[1] for b in self.domain])
        return np.all((x >= lo) & (x <= hi), axis=-1)

    def describe(self) -> dict:
        return {"name": self.name, "kind": self.kind.value, "dim": self.dim,
                "scheme": self.scheme.kind, **self.params}


@dataclass(frozen=True)
class FundamentalTensor:
    point: np.ndarray
    base: np.ndarray
    matrix: np.ndarray

    def __call__(self, v, w) -> float:
        return float(np.asarray(v) @ self.matrix @ np.asarray(w))

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])


@dataclass(frozen=True)
class Covector:
    point: np.ndarray
    components: np.ndarray

    def __call__(self, v) -> float:
        return float(self.components @ np.asarray(v, dtype=float))


CovectorLike = Union[Covector, np.ndarray, Iterable[float]]


def _components(alpha: CovectorLike) -> np.ndarray:
    if isinstance(alpha, Covector):
        return np.asarray(alpha.components, dtype=float)
    return np.asarray(alpha, dtype=float)


def _require_finite(name: str, *arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise InvalidArgument(f"{name}: non-finite input")


def _check_randers(model: FinslerModel, x: np.ndarray) -> None:
    if model.kind is not ModelKind.RANDERS or model.one_form is None:
        return
    a = model.reference_metric(x)
    b = model.one_form(x)
    beta_norm = np.sqrt(np.einsum("...i,...i->...", b, np.linalg.solve(a, b[..., None])[..., 0]))
    if np.any(beta_norm >= 1.0):
        raise ModelDegenerate(f"randers one-form has α-norm {float(np.max(beta_norm)):.3f} ≥ 1",
                              point=x)


# ── Operations ──────────────────────────────────────────────────────────

def eval_norm(model: FinslerModel, x, v) -> float:
    """F(x, v); zero iff v = 0."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    _require_finite("eval_norm", x, v)
    _check_randers(model, x)
    if not np.any(v):
        return 0.0
    return float(model.norm(x, v))


def fundamental_tensor(model: FinslerModel, x, v) -> FundamentalTensor:
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    _require_finite("fundamental_tensor", x, v)
    if not np.any(v):
        raise ZeroSection("fundamental tensor is undefined at v = 0", point=x)
    _check_randers(model, x)
    g = model.tensor(x, v)
    tensor = FundamentalTensor(point=x, base=v, matrix=g)
    if not tensor.min_eigenvalue > 0.0:
        raise ModelDegenerate("fundamental tensor is not positive definite", point=x, direction=v)
    return tensor


def flat(model: FinslerModel, x, v) -> Covector:
    """The g_v-flat of v: inverse of the Legendre transform."""
    x = np.asarray(x, dtype=float)
    return Covector(point=x, components=model.flat(x, v))


def legendre_batch(model: FinslerModel, x, alpha, max_iter: int = 60) -> np.ndarray:
    """
    Vectorized Legendre transform by damped Newton on p(v) = α,
    the stationarity system of max α(v) − F²(v)/2.
    Zero covectors map to the zero vector.
    """
    x, alpha = model._broadcast(x, alpha)
    shape = alpha.shape
    n = model.dim
    xs = x.reshape(-1, n)
    al = alpha.reshape(-1, n)
    scale = np.linalg.norm(al, axis=-1)
    live = scale > 0.0
    v = np.zeros_like(al)
    if not live.any():
        return v.reshape(shape)

    idx = np.flatnonzero(live)
    v[idx] = model.initial_covector_guess(xs[idx], al[idx])
    tol = model.scheme.newton_tol

    def objective(points, target, vec):
        return np.einsum("ij,ij->i", target, vec) - model.lagrangian(points, vec)

    for iteration in range(max_iter):
        res = np.linalg.norm(al[idx] - model.flat(xs[idx], v[idx]), axis=-1) / scale[idx]
        active = idx[res > tol]
        if active.size == 0:
            break
        pa, ta, va = xs[active], al[active], v[active]
        try:
            step = np.linalg.solve(model.tensor(pa, va), (ta - model.flat(pa, va))[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise ModelDegenerate("singular fundamental tensor in Legendre solve") from exc
        j0 = objective(pa, ta, va)
        t = np.ones(active.size)
        trial = va + step
        for _ in range(40):
            trial = va + t[:, None] * step
            ok = objective(pa, ta, trial) >= j0 - 1e-15 * (np.abs(j0) + 1.0)
            if ok.all():
                break
            t = np.where(ok, t, 0.5 * t)
        v[active] = trial
    else:
        logger.debug("legendre: reached %d iterations", max_iter)

    F = model.norm(xs[idx], v[idx])
    pair = np.einsum("ij,ij->i", al[idx], v[idx])
    stationarity = np.linalg.norm(al[idx] - model.flat(xs[idx], v[idx]), axis=-1) / scale[idx]
    pairing = np.abs(pair - F ** 2) / np.maximum(F ** 2, np.finfo(float).tiny)
    worst = max(float(np.max(stationarity)), float(np.max(pairing)))
    if not np.isfinite(worst) or worst > 1e-8:
        raise NumericalFailure(
            "legendre transform did not converge",
            best=v.reshape(shape),
            residuals={"stationarity": float(np.max(stationarity)),
                       "pairing": float(np.max(pairing))},
            iterate=v.reshape(shape),
        )
    return v.reshape(shape)


def dual_norm_batch(model: FinslerModel, x, alpha) -> np.ndarray:
    """F*(α) = α(v)/F(v) at the maximizer v of α on the indicatrix."""
    return model.norm(x, legendre_batch(model, x, alpha))


def legendre(model: FinslerModel, x, alpha: CovectorLike) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    a = _components(alpha)
    _require_finite("legendre", x, a)
    _check_randers(model, x)
    return legendre_batch(model, x, a)


def dual_norm(model: FinslerModel, x, alpha: CovectorLike) -> float:
    v = legendre(model, x, alpha)
    if not np.any(v):
        return 0.0
    return float(model.norm(x, v))


def unit_directions(dim: int, count: int = 64) -> np.ndarray:
    """Deterministic unit directions; always contains every ±e_i."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        m = max(4, 4 * ((count + 3) // 4))
        angles = 2.0 * np.pi * np.arange(m) / m
        return np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    eye = np.eye(dim)
    rng = np.random.default_rng(0)
    extra = rng.normal(size=(max(count - 2 * dim, 0), dim))
    extra /= np.linalg.norm(extra, axis=-1, keepdims=True)
    return np.concatenate([eye, -eye, extra])


def reversibility_constant(model: FinslerModel, points, directions=None) -> float:
    """
    max F(−v)/F(v) over the sample; a lower bound for Λ_F.

    Either pass `points` as an iterable of (x, v) pairs, or arrays of
    points (p, n) and directions (d, n) whose product is sampled.
    """
    if directions is None:
        pairs = list(points)
        if not pairs:
            raise InvalidArgument("reversibility_constant needs a nonempty sample")
        xs = np.array([np.asarray(p[0], dtype=float) for p in pairs])
        vs = np.array([np.asarray(p[1], dtype=float) for p in pairs])
    else:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        dirs = np.atleast_2d(np.asarray(directions, dtype=float))
        if pts.size == 0 or dirs.size == 0:
            raise InvalidArgument("reversibility_constant needs a nonempty sample")
        xs = np.repeat(pts, len(dirs), axis=0)
        vs = np.tile(dirs, (len(pts), 1))
    forward = model.norm(xs, vs)
    backward = model.norm(xs, -vs)
    ratio = np.concatenate([backward / forward, forward / backward])
    return float(max(1.0, np.max(ratio)))


def reverse(model: FinslerModel) -> FinslerModel:
    """The reverse structure F←(x, v) = F(x, −v)."""
    norm_fn = model.norm_fn
    flat_fn = model.flat_fn
    tensor_fn = model.tensor_fn
    lag_dx = model.lagrangian_dx_fn
    flat_dx = model.flat_dx_fn
    one_form = model.one_form
    return replace(
        model,
        name=f"reverse({model.name})",
        norm_fn=lambda x, v: norm_fn(x, -v),
        flat_fn=None if flat_fn is None else (lambda x, v: -flat_fn(x, -v)),
        tensor_fn=None if tensor_fn is None else (lambda x, v: tensor_fn(x, -v)),
        lagrangian_dx_fn=None if lag_dx is None else (lambda x, v: lag_dx(x, -v)),
        flat_dx_fn=None if flat_dx is None else (lambda x, v: -flat_dx(x, -v)),
        one_form=None if one_form is None else (lambda x: -one_form(x)),
        factors=tuple(reverse(f) for f in model.factors),
    )
