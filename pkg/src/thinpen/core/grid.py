"""Problem parameters and the structured half-box grid.

The computational domain is ``[-L, L]^(n-1) x [0, L]``. The bottom face
``x_n = 0`` (without its rim) carries the penalised flux condition; every
other boundary node holds Dirichlet data.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .expr import BoundaryExpr, parse_expr

__all__ = ["GridError", "NodeClass", "ProblemConfig", "HalfGrid", "build_grid"]


class GridError(ValueError):
    pass


class NodeClass(enum.IntEnum):
    INTERIOR = 0
    GAMMA = 1
    DIRICHLET = 2


def _check_divides(L: float, h: float) -> int:
    if not h > 0 or not L > 0:
        raise GridError(f"L and h must be positive (L={L}, h={h})")
    if h > L:
        raise GridError(f"h={h} exceeds L={L}")
    ratio = L / h
    m = int(round(ratio))
    if abs(ratio - m) > 1e-9 * max(1.0, ratio):
        raise GridError(f"h={h} does not divide L={L}")
    return m


@dataclass(frozen=True)
class ProblemConfig:
    """Physical and penalty parameters plus grid geometry.

    ``g_expr`` is the Dirichlet data as an expression string (see
    :mod:`thinpen.core.expr`).
    """

    n: int = 2
    p: float = 2.0
    k_plus: float = 0.0
    k_minus: float = 0.0
    L: float = 1.0
    h: float = 0.05
    g_expr: str = "0"

    def __post_init__(self):
        if self.n not in (2, 3):
            raise GridError(f"n must be 2 or 3, got {self.n}")
        if not self.p > 1:
            raise GridError(f"p must exceed 1, got {self.p}")
        if not (self.k_plus >= 0 and np.isfinite(self.k_plus)):
            raise GridError(f"k_plus must be finite and >= 0, got {self.k_plus}")
        if not (self.k_minus >= 0 and np.isfinite(self.k_minus)):
            raise GridError(f"k_minus must be finite and >= 0, got {self.k_minus}")
        _check_divides(self.L, self.h)
        parse_expr(self.g_expr)

    @property
    def low_exponent(self) -> bool:
        """True for 1 < p < 2, which only the descent solver accepts."""
        return self.p < 2

    @property
    def kt_plus(self) -> float:
        return 2.0 * self.k_plus / self.p

    @property
    def kt_minus(self) -> float:
        return 2.0 * self.k_minus / self.p

    @cached_property
    def g(self) -> BoundaryExpr:
        return parse_expr(self.g_expr)

    def with_h(self, h: float) -> "ProblemConfig":
        return ProblemConfig(self.n, self.p, self.k_plus, self.k_minus, self.L, h, self.g_expr)


@dataclass(frozen=True, eq=False)
class HalfGrid:
    """Node lattice on the half-box with per-node classification.

    Nodes are stored in C order over axes ``(x1, ..., x_{n-1}, x_n)``.
    """

    n: int
    L: float
    h: float
    shape: tuple
    axes: tuple = field(repr=False)
    classes: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def points(self) -> np.ndarray:
        """Coordinates of all nodes, shape ``(size, n)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def flat_index(self, lattice) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.asarray(lattice).T), self.shape)

    def lattice_index(self, flat) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(flat), self.shape), axis=-1)

    def mask(self, cls: NodeClass) -> np.ndarray:
        return self.classes == cls

    @cached_property
    def free(self) -> np.ndarray:
        """Flat indices of INTERIOR and GAMMA nodes."""
        return np.flatnonzero(self.classes != NodeClass.DIRICHLET)

    @cached_property
    def dirichlet(self) -> np.ndarray:
        return np.flatnonzero(self.classes == NodeClass.DIRICHLET)

    @cached_property
    def bottom(self) -> np.ndarray:
        """Flat indices of all nodes with x_n = 0, rim included."""
        lat = self.lattice_index(np.arange(self.size))
        return np.flatnonzero(lat[:, -1] == 0)

    @cached_property
    def bottom_weights(self) -> np.ndarray:
        """Trapezoid weights (times h^(n-1)) for the nodes in :attr:`bottom`."""
        lat = self.lattice_index(self.bottom)
        w = np.ones(len(self.bottom))
        for d in range(self.n - 1):
            on_rim = (lat[:, d] == 0) | (lat[:, d] == self.shape[d] - 1)
            w[on_rim] *= 0.5
        return w * self.h ** (self.n - 1)

    def contains(self, points, atol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(points)
        lo = np.array([-self.L] * (self.n - 1) + [0.0])
        hi = np.full(self.n, self.L)
        return np.all((pts >= lo - atol) & (pts <= hi + atol), axis=1)


def build_grid(config: ProblemConfig) -> HalfGrid:
    """Discretise the half-box of ``config``.

    Tangential axes get ``2L/h + 1`` nodes, the vertical axis ``L/h + 1``.
    """
    m = _check_divides(config.L, config.h)
    n, L, h = config.n, config.L, config.h
    tang = np.linspace(-L, L, 2 * m + 1)
    vert = np.linspace(0.0, L, m + 1)
    axes = tuple([tang] * (n - 1) + [vert])
    shape = tuple(len(a) for a in axes)

    idx = np.indices(shape).reshape(n, -1).T
    on_side = np.zeros(len(idx), dtype=bool)
    for d in range(n - 1):
        on_side |= (idx[:, d] == 0) | (idx[:, d] == shape[d] - 1)
    top = idx[:, -1] == shape[-1] - 1
    bottom = idx[:, -1] == 0

    classes = np.full(len(idx), NodeClass.INTERIOR, dtype=np.int8)
    classes[bottom & ~on_side] = NodeClass.GAMMA
    classes[on_side | top] = NodeClass.DIRICHLET
    classes.setflags(write=False)
    return HalfGrid(n=n, L=L, h=h, shape=shape, axes=axes, classes=classes)
