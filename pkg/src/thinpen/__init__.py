"""Numerical laboratory for the two-phase penalised thin obstacle problem."""

from .core import AnalyticField, Field, HalfGrid, NodeClass, ProblemConfig, build_grid, parse_expr

__version__ = "0.1.0"

__all__ = [
    "AnalyticField",
    "Field",
    "HalfGrid",
    "NodeClass",
    "ProblemConfig",
    "build_grid",
    "parse_expr",
]
