"""Nodal fields on a :class:`HalfGrid` and their multilinear interpolant.

Anything with ``value(points)`` and ``gradient(points)`` methods can be fed to
the functionals; :class:`Field` does this through interpolation and
:class:`AnalyticField` wraps closed-form functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import HalfGrid, NodeClass

__all__ = ["DomainError", "Field", "AnalyticField", "interpolate", "gradient_at"]

_SNAP = 1e-9


class DomainError(ValueError):
    pass


def _cell_coords(grid: HalfGrid, pts: np.ndarray):
    """Fractional lattice coordinates, snapped to integers within _SNAP."""
    lo = np.array([-grid.L] * (grid.n - 1) + [0.0])
    s = (pts - lo) / grid.h
    r = np.round(s)
    near = np.abs(s - r) < _SNAP
    s = np.where(near, r, s)
    return s


def _corner_weights(t: np.ndarray, bits: tuple) -> np.ndarray:
    w = np.ones(t.shape[0])
    for d, b in enumerate(bits):
        w = w * (t[:, d] if b else 1.0 - t[:, d])
    return w


def _corners(n: int):
    return [tuple((c >> d) & 1 for d in range(n)) for c in range(2**n)]


@dataclass(frozen=True, eq=False)
class Field:
    """One real value per grid node."""

    grid: HalfGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).ravel()
        if vals.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} values, got {vals.size}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: HalfGrid, func: Callable) -> "Field":
        """Sample ``func`` (taking an ``(m, n)`` array) at every node."""
        return cls(grid, func(grid.points))

    @property
    def nodal(self) -> np.ndarray:
        """Values reshaped to the lattice shape."""
        return self.values.reshape(self.grid.shape)

    def __mul__(self, c: float) -> "Field":
        return Field(self.grid, c * self.values)

    __rmul__ = __mul__

    def trace(self) -> tuple[np.ndarray, np.ndarray]:
        """Tangential coordinates and values along x_n = 0 (n = 2 only)."""
        if self.grid.n != 2:
            raise ValueError("trace() is defined for n = 2")
        return self.grid.axes[0], self.nodal[:, 0].copy()

    def dirichlet_sup(self) -> float:
        return float(np.max(np.abs(self.values[self.grid.dirichlet])))

    def value(self, points) -> np.ndarray:
        return interpolate(self, points)

    def gradient(self, points) -> np.ndarray:
        return gradient_at(self, points, check=False)


def interpolate(field: Field, points) -> np.ndarray | float:
    """Multilinear interpolation from the ``2^n`` surrounding nodes.

    Accepts a single point ``(n,)`` or a batch ``(m, n)``; raises
    :class:`DomainError` outside the closed half-box.
    """
    grid = field.grid
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if not np.all(grid.contains(pts)):
        bad = pts[~grid.contains(pts)][0]
        raise DomainError(f"point {tuple(bad)} lies outside the half-box")
    s = _cell_coords(grid, pts)
    hi = np.array(grid.shape) - 2
    i0 = np.clip(np.floor(s).astype(int), 0, hi)
    t = s - i0
    vals = field.nodal
    out = np.zeros(len(pts))
    for bits in _corners(grid.n):
        idx = tuple(i0[:, d] + bits[d] for d in range(grid.n))
        out += _corner_weights(t, bits) * vals[idx]
    return float(out[0]) if single else out


def gradient_at(field: Field, points, check: bool = True) -> np.ndarray:
    """Gradient of the multilinear interpolant.

    On a cell face the two one-sided derivatives are averaged, so at nodes
    this reduces to centred differences; on x_n = 0 only the cell above is
    available. With ``check`` the points must be at least ``h`` away from
    the Dirichlet part of the boundary.
    """
    grid = field.grid
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if not np.all(grid.contains(pts)):
        raise DomainError("gradient requested outside the half-box")
    if check:
        margin = grid.L - np.max(np.abs(pts[:, :-1]), axis=1)
        margin = np.minimum(margin, grid.L - pts[:, -1])
        if np.any(margin < grid.h - 1e-12):
            raise DomainError("point closer than h to the Dirichlet boundary")
    s = _cell_coords(grid, pts)
    hi = np.array(grid.shape) - 2
    i_dn = np.clip(np.ceil(s).astype(int) - 1, 0, hi)
    i_up = np.clip(np.floor(s).astype(int), 0, hi)
    vals = field.nodal
    grad = np.zeros_like(pts)
    for d in range(grid.n):
        acc = np.zeros(len(pts))
        for i0 in (i_dn, i_up):
            # cells differ only along d; other axes use the floor cell
            base = i_up.copy()
            base[:, d] = i0[:, d]
            t = s - base
            for bits in _corners(grid.n):
                w = np.ones(len(pts))
                for e in range(grid.n):
                    if e == d:
                        w = w * ((1.0 if bits[e] else -1.0) / grid.h)
                    else:
                        w = w * (t[:, e] if bits[e] else 1.0 - t[:, e])
                idx = tuple(base[:, e] + bits[e] for e in range(grid.n))
                acc += w * vals[idx]
        grad[:, d] = 0.5 * acc
    return grad[0] if single else grad


@dataclass(frozen=True, eq=False)
class AnalyticField:
    """A closed-form function used in place of a solved field.

    ``grad`` may be omitted, in which case centred differences with step
    1e-6 are used.
    """

    func: Callable
    grad: Callable | None = None
    n: int = 2
    label: str = ""

    def value(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self.func(pts), dtype=float).reshape(len(pts))

    def gradient(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.grad is not None:
            return np.asarray(self.grad(pts), dtype=float).reshape(pts.shape)
        eps = 1e-6
        out = np.empty_like(pts)
        for d in range(pts.shape[1]):
            step = np.zeros(pts.shape[1])
            step[d] = eps
            out[:, d] = (self.value(pts + step) - self.value(pts - step)) / (2 * eps)
        return out

    def __mul__(self, c: float) -> "AnalyticField":
        f, g = self.func, self.grad
        return AnalyticField(
            lambda x: c * f(x),
            None if g is None else (lambda x: c * g(x)),
            self.n,
            self.label,
        )

    __rmul__ = __mul__


def node_class_counts(grid: HalfGrid) -> dict:
    return {c.name: int(np.sum(grid.classes == c)) for c in NodeClass}
