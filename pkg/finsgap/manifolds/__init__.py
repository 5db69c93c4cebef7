"""FINSGAP Manifolds — the model catalog"""
from .riemannian import euclidean, riemannian, round_sphere_chart
from .randers import minkowski_randers, randers, shear_randers
from .minkowski import minkowski, quartic_minkowski
from .product import product
from .circle import Circle, MinkowskiTorus

__all__ = [
    "euclidean", "riemannian", "round_sphere_chart",
    "minkowski_randers", "randers", "shear_randers",
    "minkowski", "quartic_minkowski",
    "product",
    "Circle", "MinkowskiTorus",
]
