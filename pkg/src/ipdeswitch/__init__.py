"""Grid solver and independent oracles for optimal switching obstacle systems with jumps."""

from .expr import Expr, parse
from .frozen_solver import FrozenJumpField, ReflectionField, solve_frozen
from .measure import FiniteLevyMeasure
from .operators import Grid, GridOperators, ValueField, apply_B, apply_K, apply_local
from .picard import ConvergenceReport, WeightSpec, contraction_window, picard_solve
from .problem import SwitchingProblem, ValidationReport, validate

__all__ = [
    "Expr", "parse", "FiniteLevyMeasure", "SwitchingProblem", "ValidationReport", "validate",
    "Grid", "GridOperators", "ValueField", "apply_local", "apply_K", "apply_B",
    "FrozenJumpField", "ReflectionField", "solve_frozen",
    "WeightSpec", "ConvergenceReport", "contraction_window", "picard_solve",
]
__version__ = "0.1.0"
