"""Grid geometry, nodal fields, interpolation and boundary-data expressions."""

from .expr import (
    BoundaryExpr,
    ExprError,
    ExprEvalError,
    ExprSyntaxError,
    UnknownIdentifier,
    parse_expr,
)
from .field import AnalyticField, DomainError, Field, gradient_at, interpolate, node_class_counts
from .grid import GridError, HalfGrid, NodeClass, ProblemConfig, build_grid

__all__ = [
    "AnalyticField",
    "BoundaryExpr",
    "DomainError",
    "ExprError",
    "ExprEvalError",
    "ExprSyntaxError",
    "Field",
    "GridError",
    "HalfGrid",
    "NodeClass",
    "ProblemConfig",
    "UnknownIdentifier",
    "build_grid",
    "gradient_at",
    "interpolate",
    "node_class_counts",
    "parse_expr",
]
