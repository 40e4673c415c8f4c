"""Weighted functional principal components and scalar-on-function regression."""

from .numerics import (
    Domain,
    ExponentialWeight,
    HalfNormalWeight,
    StepWeight,
    UniformWeight,
    WorkingGrid,
    build_grid,
    evaluate_weight,
    inner_product_nu,
    integrate,
    integrate_weight,
    weight_from_json,
    weight_to_json,
)

__all__ = [
    "Domain",
    "ExponentialWeight",
    "HalfNormalWeight",
    "StepWeight",
    "UniformWeight",
    "WorkingGrid",
    "build_grid",
    "evaluate_weight",
    "inner_product_nu",
    "integrate",
    "integrate_weight",
    "weight_from_json",
    "weight_to_json",
]

__version__ = "0.1.0"
