"""Zero set of the trace on x_n = 0, point classification, and the C^{1,1} probe."""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .core import Field, ProblemConfig, interpolate
from .functionals import (
    AmbiguousFrequency,
    DegenerateDenominator,
    QuadratureSpec,
    frequency_limit,
    geometric_radii,
    radial_profile,
)

__all__ = [
    "ResolutionError",
    "PointClass",
    "FreeBoundaryPoint",
    "trace_zero_set",
    "classify",
    "c11_probe",
    "points_to_csv",
]


class ResolutionError(ValueError):
    pass


class PointClass(str, enum.Enum):
    REGULAR = "REGULAR"
    SINGULAR_CANDIDATE = "SINGULAR_CANDIDATE"


@dataclass(frozen=True)
class FreeBoundaryPoint:
    x: float
    bracket: tuple[float, float]
    classification: PointClass | None = None
    grad_norm: float | None = None
    mu: int | None = None
    mu_hat: float | None = None
    ambiguous: bool = False
    stratum: int | None = None
    note: str = ""


def _trace_value(field: Field, x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return interpolate(field, np.stack([x, np.zeros_like(x)], axis=1))


def trace_zero_set(field: Field, config: ProblemConfig | None = None) -> list[FreeBoundaryPoint]:
    """Zeros of the trace between GAMMA nodes (n = 2).

    A node counts as a zero when ``|u| <= 1e-8 * max|g|``; strict sign
    changes between neighbouring nodes are refined on the piecewise-linear
    trace. Zeros closer than ``h`` are merged and zeros within ``2h`` of the
    rim are dropped.
    """
    grid = field.grid
    if grid.n != 2:
        raise ValueError("trace_zero_set is implemented for n = 2")
    h, L = grid.h, grid.L
    xs, tr = field.trace()
    eps = 1e-8 * field.dirichlet_sup()
    gamma = np.arange(1, len(xs) - 1)
    found: list[tuple[float, float, float]] = []
    is_zero = np.abs(tr) <= eps
    for i in gamma[is_zero[gamma]]:
        found.append((xs[i], xs[i], xs[i]))
    for i in gamma[:-1]:
        j = i + 1
        if is_zero[i] or is_zero[j] or tr[i] * tr[j] >= 0:
            continue
        root = brentq(lambda s: float(_trace_value(field, s)[0]), xs[i], xs[j],
                      xtol=h * 1e-12, rtol=4 * np.finfo(float).eps)
        found.append((root, xs[i], xs[j]))
    found.sort()

    merged: list[list[tuple[float, float, float]]] = []
    for item in found:
        if merged and item[0] - merged[-1][-1][0] < h - 1e-12:
            merged[-1].append(item)
        else:
            merged.append([item])
    out = []
    for group in merged:
        x = float(np.mean([g[0] for g in group]))
        if abs(x) > L - 2 * h + 1e-12:
            continue
        out.append(FreeBoundaryPoint(x, (min(g[1] for g in group), max(g[2] for g in group))))
    return out


def classify(points, field: Field, config: ProblemConfig, tau_grad: float | None = None,
             radii=None, quad: QuadratureSpec = QuadratureSpec()) -> list[FreeBoundaryPoint]:
    """Tag each point REGULAR or SINGULAR_CANDIDATE.

    The tangential gradient is a centred difference of the trace with step h.
    Singular candidates get a frequency from :func:`frequency_limit`; an
    ambiguous fit, or an integer frequency below 2, is recorded on the point
    rather than raised.
    """
    grid = field.grid
    h = grid.h
    tau = np.sqrt(h) if tau_grad is None else float(tau_grad)
    if not tau > 0:
        raise ValueError("tau_grad must be positive")
    out = []
    for pt in points:
        up, dn = _trace_value(field, [pt.x + h, pt.x - h])
        g = abs(float(up - dn)) / (2 * h)
        if g > tau:
            out.append(replace(pt, classification=PointClass.REGULAR, grad_norm=g))
            continue
        R = geometric_radii(grid.L, h) if radii is None else np.asarray(radii, dtype=float)
        R = R[abs(pt.x) + R <= grid.L + 1e-12]
        kw = dict(classification=PointClass.SINGULAR_CANDIDATE, grad_norm=g,
                  stratum=0 if grid.n == 2 else None)
        try:
            fit = frequency_limit(radial_profile(field, config, pt.x, R, quad))
        except AmbiguousFrequency as exc:
            out.append(replace(pt, mu_hat=exc.fit.mu_hat, ambiguous=True,
                               note="frequency fit not near an integer", **kw))
            continue
        except (DegenerateDenominator, ValueError) as exc:
            out.append(replace(pt, ambiguous=True, note=str(exc), **kw))
            continue
        if fit.mu < 2:
            out.append(replace(pt, mu_hat=fit.mu_hat, ambiguous=True,
                               note=f"frequency {fit.mu} below 2 at a singular candidate", **kw))
            continue
        out.append(replace(pt, mu=fit.mu, mu_hat=fit.mu_hat, **kw))
    return out


def c11_probe(field: Field, config: ProblemConfig, x0: float, offsets) -> list[tuple[float, float]]:
    """Second difference quotients ``|u(x0+d) - 2u(x0) + u(x0-d)| / d^2`` of the trace."""
    if config.p != 2:
        raise ValueError("the C^{1,1} probe is defined for p = 2")
    h = field.grid.h
    out = []
    for d in offsets:
        d = float(d)
        if d < 2 * h - 1e-12:
            raise ResolutionError(f"offset {d} is below twice the grid spacing {h}")
        a, b, c = _trace_value(field, [x0 - d, x0, x0 + d])
        out.append((d, abs(a - 2 * b + c) / d**2))
    return out


def points_to_csv(points, fh=None) -> str:
    """Columns x1,class,grad_norm,mu,ambiguous."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x1", "class", "grad_norm", "mu", "ambiguous"])
    for p in points:
        w.writerow([
            f"{p.x:.17g}",
            "" if p.classification is None else p.classification.value,
            "" if p.grad_norm is None else f"{p.grad_norm:.17g}",
            "" if p.mu is None else p.mu,
            int(p.ambiguous),
        ])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text
