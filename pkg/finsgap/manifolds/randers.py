"""
Randers structures — F(x, v) = α(v) + β(v), α = √(a_ij v^i v^j), β = b_i v^i.

Closed forms with ℓ = a v / α:
    p    = F (ℓ + b)
    g_ij = (F/α)(a_ij − ℓ_i ℓ_j) + (ℓ_i + b_i)(ℓ_j + b_j)
Strong convexity needs ‖b‖_α < 1, checked on a sample of the declared domain box.
"""
from __future__ import annotations
import itertools
import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import ModelDegenerate
from ..core.norms import CLOSED_FORM, FinslerModel, ModelKind

logger = logging.getLogger(__name__)

PointFn = Callable[[np.ndarray], np.ndarray]

_SAMPLE_CLAMP = 10.0


def _parts(a, b, v):
    alpha = np.sqrt(np.maximum(np.einsum("...i,...ij,...j->...", v, a, v), 0.0))
    beta = np.einsum("...i,...i->...", b, v)
    return alpha, beta


def beta_norm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """α-norm of the one-form: √(b a⁻¹ b)."""
    return np.sqrt(np.einsum("...i,...i->...", b, np.linalg.solve(a, b[..., None])[..., 0]))


def _domain_sample(domain: Sequence[Tuple[float, float]], per_axis: int = 9) -> np.ndarray:
    axes = []
    for lo, hi in domain:
        lo = max(lo, -_SAMPLE_CLAMP)
        hi = min(hi, _SAMPLE_CLAMP)
        axes.append(np.linspace(lo, hi, per_axis))
    return np.array(list(itertools.product(*axes)))


def randers(dim: int, metric: PointFn, one_form: PointFn,
            domain: Sequence[Tuple[float, float]] = (), name: str = "randers",
            x_independent: bool = False, params: Optional[dict] = None) -> FinslerModel:

    def norm_fn(x, v):
        alpha, beta = _parts(metric(x), one_form(x), v)
        return alpha + beta

    def flat_fn(x, v):
        a, b = metric(x), one_form(x)
        alpha, beta = _parts(a, b, v)
        ell = np.einsum("...ij,...j->...i", a, v) / alpha[..., None]
        return (alpha + beta)[..., None] * (ell + b)

    def tensor_fn(x, v):
        a, b = metric(x), one_form(x)
        alpha, beta = _parts(a, b, v)
        ell = np.einsum("...ij,...j->...i", a, v) / alpha[..., None]
        lb = ell + b
        ratio = ((alpha + beta) / alpha)[..., None, None]
        return ratio * (a - ell[..., :, None] * ell[..., None, :]) + lb[..., :, None] * lb[..., None, :]

    box = tuple(tuple(b) for b in domain) or tuple((-np.inf, np.inf) for _ in range(dim))
    sample = _domain_sample(box)
    worst = float(np.max(beta_norm(metric(sample), one_form(sample))))
    if worst >= 1.0:
        raise ModelDegenerate(f"{name}: ‖β‖_α reaches {worst:.4f} ≥ 1 on the declared domain")
    logger.debug("%s: max ‖β‖_α on domain sample = %.4f", name, worst)

    return FinslerModel(
        dim=dim, kind=ModelKind.RANDERS, norm_fn=norm_fn, scheme=CLOSED_FORM,
        domain=box, name=name, x_independent=x_independent, flat_fn=flat_fn,
        tensor_fn=tensor_fn, reference_metric=metric, one_form=one_form,
        params={**(params or {}), "max_beta_norm": worst},
    )


def minkowski_randers(b: Sequence[float]) -> FinslerModel:
    """x-independent Randers norm |v| + b·v on ℝⁿ."""
    b = np.asarray(b, dtype=float)
    dim = b.size
    eye = np.eye(dim)

    def metric(x):
        return np.broadcast_to(eye, np.shape(x)[:-1] + (dim, dim))

    def one_form(x):
        return np.broadcast_to(b, np.shape(x)[:-1] + (dim,))

    return randers(dim, metric, one_form, name="minkowski_randers", x_independent=True,
                   params={"b": b.tolist()})


def shear_randers(strength: float = 0.5, half_width: float = 1.5) -> FinslerModel:
    """|v| + c·x²·dx¹ on a box: β is not parallel, so the structure is not Berwald."""
    eye = np.eye(2)

    def metric(x):
        return np.broadcast_to(eye, np.shape(x)[:-1] + (2, 2))

    def one_form(x):
        x = np.asarray(x, dtype=float)
        b = np.zeros(x.shape)
        b[..., 0] = strength * x[..., 1]
        return b

    box = ((-half_width, half_width), (-half_width, half_width))
    return randers(2, metric, one_form, domain=box, name="shear_randers",
                   params={"strength": strength})
