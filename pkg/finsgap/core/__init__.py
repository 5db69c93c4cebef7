"""FINSGAP Core — norms, measures, grids, geometry, curvature, config"""
from .errors import (
    ConfigError, DomainExit, FinsgapError, InvalidArgument, InvalidDecomposition,
    ModelDegenerate, NumericalFailure, StageFailure, ZeroSection,
)
from .norms import FinslerModel, ModelKind, dual_norm, legendre, reverse, reversibility_constant
from .measure import WeightedMeasure, gaussian_measure, product_measure, uniform_measure
from .grid import Axis, DiscreteField, Grid
from .config import ExperimentConfig, GridSpec, ModelSpec, validate_config
from .validator import Check, CheckLedger, RunReport

__all__ = [
    "ConfigError", "DomainExit", "FinsgapError", "InvalidArgument", "InvalidDecomposition",
    "ModelDegenerate", "NumericalFailure", "StageFailure", "ZeroSection",
    "FinslerModel", "ModelKind", "dual_norm", "legendre", "reverse", "reversibility_constant",
    "WeightedMeasure", "gaussian_measure", "product_measure", "uniform_measure",
    "Axis", "DiscreteField", "Grid",
    "ExperimentConfig", "GridSpec", "ModelSpec", "validate_config",
    "Check", "CheckLedger", "RunReport",
]
