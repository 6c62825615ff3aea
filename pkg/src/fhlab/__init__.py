"""Fractal dimensions of closed sets and weighted Hardy-Sobolev inequalities
in their complements, checked numerically."""
from __future__ import annotations

__version__ = "0.1.0"

from .setmodel import SetSpec, SetHandle, build_set, distance, sample_points  # noqa: E402
from .field import Ball, Box, Divergent, BudgetExceeded, integrate_weighted  # noqa: E402
from .hardy import HardyParams, exponent_algebra, evaluate_functional, estimate_constant  # noqa: E402
from .verdict import predict, cross_check  # noqa: E402

__all__ = [
    "SetSpec", "SetHandle", "build_set", "distance", "sample_points",
    "Ball", "Box", "Divergent", "BudgetExceeded", "integrate_weighted",
    "HardyParams", "exponent_algebra", "evaluate_functional", "estimate_constant",
    "predict", "cross_check",
]
