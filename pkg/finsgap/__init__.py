"""
FINSGAP — sharp spectral gaps and rigidity on weighted Finsler manifolds

A numerical laboratory for Ric_∞ ≥ K > 0: the first eigenvalue of the
nonlinear Laplacian, needle decompositions, and the splitting diagnostics
that certify equality λ₁ = K.
"""
from .core.errors import FinsgapError, InvalidArgument, NumericalFailure, StageFailure
from .core.config import ExperimentConfig, validate_config
from .core.norms import FinslerModel
from .engines.spectral import first_eigenvalue
from .engines.needles import make_gaussian_needle, needle_poincare
from .engines.rigidity import ProductModel, corollary_pipeline, splitting_check
from .laboratory import Laboratory, list_experiments, run_config

__version__ = "1.0.0"
__all__ = [
    "FinsgapError", "InvalidArgument", "NumericalFailure", "StageFailure",
    "ExperimentConfig", "validate_config",
    "FinslerModel",
    "first_eigenvalue",
    "make_gaussian_needle", "needle_poincare",
    "ProductModel", "corollary_pipeline", "splitting_check",
    "Laboratory", "list_experiments", "run_config",
]
