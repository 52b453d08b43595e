"""Canonical problem instances and a solver wrapper that handles trace pinning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Field, ProblemConfig, interpolate
from .solver import SolveOptions, SolveReport, solve

__all__ = ["Instance", "SolvedInstance", "CANONICAL", "solve_instance", "pinned_config"]


@dataclass(frozen=True)
class Instance:
    """A problem plus the point where it is analysed.

    ``pin_zero``: if set, a constant is subtracted from the boundary data so
    that the discrete trace vanishes at ``x1 = pin_zero``. ``center=None``
    means "the first point of the trace zero set".
    """

    id: str
    config: ProblemConfig
    center: float | None = 0.0
    pin_zero: float | None = None


@dataclass
class SolvedInstance:
    instance: Instance
    config: ProblemConfig
    field: Field
    report: SolveReport
    center: float
    offset: float = 0.0


def _shifted(config: ProblemConfig, c: float) -> ProblemConfig:
    if c == 0:
        return config
    return ProblemConfig(n=config.n, p=config.p, k_plus=config.k_plus, k_minus=config.k_minus,
                         L=config.L, h=config.h, g_expr=f"({config.g_expr}) - ({float(c)!r})")


def _trace_at(field: Field, x1: float) -> float:
    pt = np.zeros((1, field.grid.n))
    pt[0, 0] = x1
    return float(interpolate(field, pt)[0])


def pinned_config(config: ProblemConfig, x1: float, opts: SolveOptions | None = None,
                  max_steps: int = 30):
    """Secant iteration on the data offset ``c`` until the trace of the solution
    for ``g - c`` vanishes at ``x1``. Exact after one step when the problem is
    linear. Returns (config, field, report, c)."""
    scale = max(1.0, float(np.max(np.abs(config.g(_dirichlet_pts(config))))))
    tol = 1e-12 * scale
    c0, c1 = 0.0, scale
    f0, r0 = _solve_at(config, c0, x1, opts)
    if abs(f0[0]) <= tol:
        return config, f0[1], r0, 0.0
    f1, r1 = _solve_at(config, c1, x1, opts)
    for _ in range(max_steps):
        if abs(f1[0]) <= tol:
            return _shifted(config, c1), f1[1], r1, c1
        if f1[0] == f0[0]:
            break
        c0, c1, f0 = c1, c1 - f1[0] * (c1 - c0) / (f1[0] - f0[0]), f1
        f1, r1 = _solve_at(config, c1, x1, opts)
    raise RuntimeError(f"could not pin the trace to zero at x1={x1}")


def _dirichlet_pts(config: ProblemConfig):
    from .core import build_grid

    grid = build_grid(config)
    return grid.points[grid.dirichlet]


def _solve_at(config, c, x1, opts):
    field, rep = solve(_shifted(config, c), opts)
    return (_trace_at(field, x1), field), rep


def solve_instance(inst: Instance, h: float | None = None,
                   opts: SolveOptions | None = None) -> SolvedInstance:
    config = inst.config if h is None else inst.config.with_h(h)
    offset = 0.0
    if inst.pin_zero is not None:
        config, field, report, offset = pinned_config(config, inst.pin_zero, opts)
    else:
        field, report = solve(config, opts)
    center = inst.center
    if center is None:
        from .freeboundary import trace_zero_set

        pts = trace_zero_set(field, config)
        if not pts:
            raise RuntimeError(f"instance {inst.id}: trace has no zero to analyse")
        center = pts[0].x
    return SolvedInstance(inst, config, field, report, float(center), offset)


CANONICAL = {
    "A": Instance("A", ProblemConfig(n=2, p=2, k_plus=0, k_minus=0, L=1, h=0.02, g_expr="x1")),
    "B": Instance("B", ProblemConfig(n=2, p=2, k_plus=0.5, k_minus=0.5, L=1, h=0.02,
                                     g_expr="exp(0.5*xn)*cos(0.5*x1)")),
    "C": Instance("C", ProblemConfig(n=2, p=2, k_plus=1, k_minus=0, L=1, h=0.02, g_expr="x1 - 0.1"),
                  center=None),
    "D": Instance("D", ProblemConfig(n=2, p=2, k_plus=1, k_minus=1, L=1, h=0.02, g_expr="x1^2"),
                  pin_zero=0.0),
}
