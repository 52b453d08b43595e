"""Rescalings at a boundary point and homogeneous harmonic blow-up fits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Field, ProblemConfig
from .functionals import QuadratureSpec, as_center, half_sphere_l2

__all__ = [
    "HomPoly",
    "RescaledField",
    "BlowupFit",
    "make_basis",
    "rescale",
    "fit_blowup",
]

# L2 norm of Re((x1 + i xn)^mu) on the upper unit half circle, any mu >= 1
_HALF_CIRCLE_NORM = np.sqrt(np.pi / 2)


def _re_power(pts: np.ndarray, mu: int) -> np.ndarray:
    z = pts[:, 0] + 1j * np.abs(pts[:, 1])
    return np.real(z**mu)


def _re_power_grad(pts: np.ndarray, mu: int) -> np.ndarray:
    z = pts[:, 0] + 1j * np.abs(pts[:, 1])
    dz = mu * z ** (mu - 1)
    sgn = np.where(pts[:, 1] < 0, -1.0, 1.0)
    return np.stack([np.real(dz), -np.imag(dz) * sgn], axis=1)


@dataclass(frozen=True, eq=False)
class HomPoly:
    """Harmonic polynomial, homogeneous of degree ``degree`` and even in x_n.

    ``coeffs`` are taken over :func:`make_basis` (for n = 2 a single element,
    ``Re((x1 + i xn)^mu)`` scaled to unit norm on the upper half circle).
    """

    degree: int
    n: int = 2
    coeffs: np.ndarray = field(default_factory=lambda: np.ones(1))

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.n != 2:
            raise ValueError(f"unsupported dimension n={self.n}")
        object.__setattr__(self, "coeffs", np.atleast_1d(np.asarray(self.coeffs, dtype=float)))
        if self.coeffs.shape != (1,):
            raise ValueError("n = 2 polynomials carry exactly one coefficient")

    @classmethod
    def re_power(cls, mu: int, scale: float = 1.0) -> "HomPoly":
        """``scale * Re((x1 + i xn)^mu)``, e.g. ``re_power(2)`` is x1^2 - xn^2."""
        return cls(mu, 2, np.array([scale * _HALF_CIRCLE_NORM]))

    def value(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self.coeffs[0] / _HALF_CIRCLE_NORM * _re_power(pts, self.degree)

    def gradient(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self.coeffs[0] / _HALF_CIRCLE_NORM * _re_power_grad(pts, self.degree)

    __call__ = value

    def row(self) -> list:
        """Serialisable form ``[n, mu, c_1, ...]``."""
        return [self.n, self.degree, *map(float, self.coeffs)]


def make_basis(mu: int, n: int = 2) -> list[HomPoly]:
    """Orthonormal basis (in L2 of the upper unit half sphere) of the
    degree-``mu`` harmonic polynomials even in x_n."""
    if mu < 1:
        raise ValueError("mu must be >= 1")
    if n != 2:
        raise ValueError(f"unsupported dimension n={n}")
    return [HomPoly(mu, 2, np.ones(1))]


@dataclass(frozen=True, eq=False)
class RescaledField:
    """``x -> u(r x + x0) / norm`` on the unit half ball."""

    source: object
    center: np.ndarray
    r: float
    kind: str
    norm: float
    mu: int | None = None

    def value(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self.source.value(self.r * pts + self.center) / self.norm

    def gradient(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self.r * self.source.gradient(self.r * pts + self.center) / self.norm

    __call__ = value


def _check_geometry(src, c: np.ndarray, r: float):
    if not r > 0:
        raise ValueError("scale r must be positive")
    if isinstance(src, Field):
        L = src.grid.L
        if abs(c[0]) + r > L + 1e-12 or r > L + 1e-12:
            raise ValueError(f"half ball of radius {r} at {tuple(c)} leaves the box")


def rescale(src, x0, r: float, kind: str = "almgren", mu: int | None = None,
            quad: QuadratureSpec = QuadratureSpec()) -> RescaledField:
    """Almgren (``kind='almgren'``) or homogeneous (``kind='homogeneous'``) rescaling.

    The Almgren normalisation divides by sqrt(phi(r)), phi being the mean of
    u^2 over the half circle of radius r; the homogeneous one by r^mu.
    """
    c = as_center(x0)
    _check_geometry(src, c, r)
    if kind == "almgren":
        phi = half_sphere_l2(src, c, r, quad) / (np.pi * r)
        if not phi > 0:
            raise ValueError(f"phi({r}) = 0: Almgren rescaling undefined")
        return RescaledField(src, c, r, kind, float(np.sqrt(phi)))
    if kind == "homogeneous":
        if mu is None or mu < 0:
            raise ValueError("homogeneous rescaling needs mu >= 0")
        return RescaledField(src, c, r, kind, float(r**mu), mu)
    raise ValueError(f"unknown rescaling kind {kind!r}")


@dataclass(frozen=True)
class BlowupFit:
    poly: HomPoly
    residual: float
    r_fit: float

    def __iter__(self):
        # unpacks as (poly, residual)
        return iter((self.poly, self.residual))


def fit_blowup(src, config: ProblemConfig | None, x0, mu: int, r_fit: float,
               quad: QuadratureSpec = QuadratureSpec()) -> BlowupFit:
    """Project ``u(r_fit x + x0) / r_fit^mu`` onto the degree-``mu`` basis.

    The projection is in L2 of the upper unit half circle; ``residual`` is the
    norm of what is left over relative to the norm of the rescaled field.
    """
    if isinstance(src, Field) and r_fit < 8 * src.grid.h - 1e-12:
        raise ValueError(f"r_fit={r_fit} is below 8h = {8 * src.grid.h}")
    basis = make_basis(mu, 2 if config is None else config.n)
    v = rescale(src, x0, r_fit, "homogeneous", mu, quad)
    theta, w = quad.angles
    pts = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    vv = v.value(pts)
    E = np.stack([b.value(pts) for b in basis], axis=1)
    G = E.T @ (w[:, None] * E)
    if np.linalg.cond(G) > 1e12:
        raise np.linalg.LinAlgError("degenerate normal matrix")
    coef = np.linalg.solve(G, E.T @ (w * vv))
    vnorm = np.sqrt(w @ vv**2)
    if not vnorm > 0:
        raise ValueError("rescaled field vanishes on the unit half circle")
    rem = vv - E @ coef
    return BlowupFit(HomPoly(mu, 2, coef), float(np.sqrt(w @ rem**2) / vnorm), r_fit)
