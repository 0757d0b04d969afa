"""Dual-market dynamic pricing with a shared inventory pool."""
from .model import (
    CostSpec,
    Independent,
    LinearDemand,
    NoiseModel,
    PerfectLinear,
    PointMass,
    ProblemSpec,
    RevenueCurve,
    TabulatedConcave,
    TruncatedNormal,
    example1,
    marginal_revenue,
    revenue,
    validate,
)
from .dp import InventoryGrid, Solution, solve, value_at

__all__ = [
    "CostSpec", "Independent", "LinearDemand", "NoiseModel", "PerfectLinear", "PointMass",
    "ProblemSpec", "RevenueCurve", "TabulatedConcave", "TruncatedNormal", "example1",
    "marginal_revenue", "revenue", "validate", "InventoryGrid", "Solution", "solve", "value_at",
]
__version__ = "0.1.0"
