"""Radial functionals around a centre on the flat boundary x_n = 0.

For a centre ``x0`` and radius ``r`` (n = 2 only):

* ``H(r)``   integral of u^2 over the upper half circle,
* ``D(r)``   Dirichlet energy of u over the upper half disc,
* ``P(r)``   integral of F(u) = k_-(u^-)^p + k_+(u^+)^p over [x0 - r, x0 + r],
* ``phi(r)`` mean of u^2 over the half circle,
* ``N = r D / H`` and ``Ntilde = r (D + 2P/p) / H``.

Surface integrals use the trapezoid rule in angle, the Dirichlet energy adds
composite Simpson in radius, and ``P`` uses Gauss-Legendre on the pieces
where the trace is smooth.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Field, ProblemConfig

__all__ = [
    "DegenerateDenominator",
    "AmbiguousFrequency",
    "QuadratureSpec",
    "FunctionalProfile",
    "FrequencyFit",
    "geometric_radii",
    "as_center",
    "radial_profile",
    "weiss",
    "monneau",
    "frequency_limit",
    "half_sphere_l2",
    "half_ball_l2",
    "flat_l2",
    "half_ball_sup",
    "half_sphere_sup",
    "flux_balance",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)


class DegenerateDenominator(ZeroDivisionError):
    def __init__(self, radius: float):
        super().__init__(f"H(r) vanishes at r={radius!r}")
        self.radius = radius


class AmbiguousFrequency(ValueError):
    def __init__(self, fit: "FrequencyFit"):
        super().__init__(
            f"frequency estimate {fit.mu_hat:.4f} is {fit.gap:.4f} away from the nearest integer"
        )
        self.fit = fit


@dataclass(frozen=True)
class QuadratureSpec:
    m_theta: int = 256
    m_rho: int = 128

    def __post_init__(self):
        if self.m_theta < 8 or self.m_rho < 8:
            raise ValueError("quadrature node counts must be >= 8")
        if self.m_rho % 2:
            raise ValueError("m_rho must be even (composite Simpson)")

    @property
    def angles(self) -> tuple[np.ndarray, np.ndarray]:
        theta = np.linspace(0.0, np.pi, self.m_theta + 1)
        w = np.full(self.m_theta + 1, np.pi / self.m_theta)
        w[[0, -1]] *= 0.5
        return theta, w

    def radial(self, r: float) -> tuple[np.ndarray, np.ndarray]:
        rho = np.linspace(0.0, r, self.m_rho + 1)
        w = np.ones(self.m_rho + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return rho, w * (r / self.m_rho) / 3.0


@dataclass
class FunctionalProfile:
    """Per-radius functionals around ``center``; arrays are aligned with ``radii``."""

    center: np.ndarray
    radii: np.ndarray
    H: np.ndarray
    D: np.ndarray
    P: np.ndarray
    phi: np.ndarray
    N: np.ndarray
    Ntilde: np.ndarray
    p: float = 2.0
    h: float | None = None
    n: int = 2
    W: np.ndarray | None = None
    M: np.ndarray | None = None
    mu: float | None = None

    @classmethod
    def from_values(cls, radii, Ntilde, **kw) -> "FunctionalProfile":
        """Profile holding only frequency values (for fitting and tests)."""
        r = np.asarray(radii, dtype=float)
        nt = np.asarray(Ntilde, dtype=float)
        nan = np.full_like(r, np.nan)
        return cls(
            center=np.zeros(2), radii=r, H=nan, D=nan, P=nan, phi=nan,
            N=kw.pop("N", nt), Ntilde=nt, **kw,
        )

    def with_weiss(self, mu: float) -> "FunctionalProfile":
        return replace(self, W=weiss(self, mu), mu=mu)

    def to_csv(self, fh=None) -> str:
        """Write columns r,H,D,P,phi,N,Ntilde[,W,M] with 17 significant digits."""
        cols = ["r", "H", "D", "P", "phi", "N", "Ntilde"]
        data = [self.radii, self.H, self.D, self.P, self.phi, self.N, self.Ntilde]
        if self.W is not None:
            cols.append("W")
            data.append(self.W)
        if self.M is not None:
            cols.append("M")
            data.append(self.M)
        order = np.argsort(self.radii)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for i in order:
            writer.writerow([f"{float(c[i]):.17g}" for c in data])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


@dataclass(frozen=True)
class FrequencyFit:
    mu_hat: float
    mu: int
    slope: float
    residual: float
    gap: float
    radii: np.ndarray = field(repr=False)


def geometric_radii(L: float, h: float | None = None, floor_factor: float = 8.0,
                    kmax: int = 64) -> np.ndarray:
    """``(L/2) 2^(-k/2)`` for k = 0, 1, ..., stopping below ``floor_factor * h``."""
    out = []
    for k in range(kmax):
        r = 0.5 * L * 2.0 ** (-k / 2)
        if h is not None and r < floor_factor * h - 1e-12:
            break
        out.append(r)
    return np.array(sorted(out))


def as_center(x0, n: int = 2) -> np.ndarray:
    """Normalise a centre given as x1 or as full coordinates; must lie on x_n = 0."""
    c = np.atleast_1d(np.asarray(x0, dtype=float))
    if c.size == n - 1:
        c = np.append(c, 0.0)
    if c.size != n:
        raise ValueError(f"centre must have {n - 1} or {n} coordinates")
    if c[-1] != 0.0:
        raise ValueError(f"centre {tuple(c)} is not on x_n = 0")
    return c


def _check_radii(src, x0: np.ndarray, radii: np.ndarray, L: float | None):
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")
    if L is None:
        return
    tang = np.max(np.abs(x0[:-1])) if x0.size > 1 else 0.0
    if tang >= L:
        raise ValueError(f"centre {tuple(x0)} is not inside the flat boundary")
    too_big = (radii > 0.5 * L + 1e-12) | (tang + radii > L + 1e-12)
    if np.any(too_big):
        raise ValueError(f"radius {radii[too_big][0]} too large for L={L} at centre {tuple(x0)}")


def _domain_L(src, config: ProblemConfig | None):
    if isinstance(src, Field):
        return src.grid.L
    return None if config is None else config.L


def _arc_points(x0, r, quad):
    theta, w = quad.angles
    pts = x0 + r * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return pts, w * r


def half_sphere_l2(src, x0, r: float, quad: QuadratureSpec = QuadratureSpec(), func=None) -> float:
    """Integral of ``u^2`` (or of ``func(u, x)``) over the upper half circle."""
    pts, w = _arc_points(x0, r, quad)
    u = src.value(pts)
    vals = u**2 if func is None else func(u, pts)
    return float(w @ vals)


def half_sphere_sup(src, x0, r: float, quad: QuadratureSpec = QuadratureSpec()) -> float:
    pts, _ = _arc_points(x0, r, quad)
    return float(np.max(np.abs(src.value(pts))))


def _polar_nodes(x0, r, quad):
    rho, wr = quad.radial(r)
    theta, wt = quad.angles
    R, T = np.meshgrid(rho, theta, indexing="ij")
    pts = x0 + np.stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()], axis=1)
    w = (wr[:, None] * wt[None, :] * R).ravel()
    return pts, w


def half_ball_l2(src, x0, r: float, quad: QuadratureSpec = QuadratureSpec()) -> float:
    """Integral of ``u^2`` over the upper half disc."""
    pts, w = _polar_nodes(x0, r, quad)
    return float(w @ src.value(pts) ** 2)


def half_ball_sup(src, x0, r: float, quad: QuadratureSpec = QuadratureSpec()) -> float:
    pts, _ = _polar_nodes(x0, r, quad)
    return float(np.max(np.abs(src.value(pts))))


def _dirichlet_integral(src, x0, r, quad) -> float:
    pts, w = _polar_nodes(x0, r, quad)
    g = src.gradient(pts)
    return float(w @ np.sum(g**2, axis=1))


def _flat_segments(src, a: float, b: float, quad: QuadratureSpec) -> np.ndarray:
    """Breakpoints on [a, b] between which the trace is polynomial."""
    if isinstance(src, Field):
        xs = src.grid.axes[0]
        inner = xs[(xs > a) & (xs < b)]
        pts = np.concatenate([[a], inner, [b]])
        # split where the piecewise-linear trace crosses zero
        u = src.value(np.stack([pts, np.zeros_like(pts)], axis=1))
        cross = np.flatnonzero(u[:-1] * u[1:] < 0)
        roots = pts[cross] - u[cross] * (pts[cross + 1] - pts[cross]) / (u[cross + 1] - u[cross])
        return np.unique(np.concatenate([pts, roots]))
    return np.linspace(a, b, 2 * quad.m_rho + 1)


def flat_integral(src, x0, r: float, integrand, quad: QuadratureSpec = QuadratureSpec()) -> float:
    """Integral of ``integrand(u)`` over the flat piece [x0 - r, x0 + r] of x_n = 0."""
    brk = _flat_segments(src, x0[0] - r, x0[0] + r, quad)
    lo, hi = brk[:-1], brk[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    xs = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    ws = (half[:, None] * _GL_W[None, :]).ravel()
    u = src.value(np.stack([xs, np.zeros_like(xs)], axis=1))
    return float(ws @ integrand(u))


def flat_l2(src, x0, r: float, quad: QuadratureSpec = QuadratureSpec()) -> float:
    return flat_integral(src, x0, r, lambda u: u**2, quad)


def _penalty_density(config: ProblemConfig):
    def F(u):
        return config.k_minus * np.maximum(-u, 0.0) ** config.p + config.k_plus * np.maximum(u, 0.0) ** config.p
    return F


def radial_profile(src, config: ProblemConfig, x0, radii,
                   quad: QuadratureSpec = QuadratureSpec()) -> FunctionalProfile:
    """Compute H, D, P, phi, N and Ntilde at each radius.

    ``src`` is a :class:`Field` or any object with ``value``/``gradient``
    methods. Raises :class:`DegenerateDenominator` when ``H(r) = 0``.
    """
    if config.n != 2:
        raise ValueError("radial functionals are implemented for n = 2 only")
    c = as_center(x0)
    r = np.sort(np.atleast_1d(np.asarray(radii, dtype=float)))
    _check_radii(src, c, r, _domain_L(src, config))
    F = _penalty_density(config)
    H = np.array([half_sphere_l2(src, c, ri, quad) for ri in r])
    bad = np.flatnonzero(~(H > 0))
    if len(bad):
        raise DegenerateDenominator(float(r[bad[0]]))
    D = np.array([_dirichlet_integral(src, c, ri, quad) for ri in r])
    if config.k_plus == 0 and config.k_minus == 0:
        P = np.zeros_like(r)
    else:
        P = np.array([flat_integral(src, c, ri, F, quad) for ri in r])
    phi = H / (np.pi * r)
    N = r * D / H
    Nt = r * (D + (2.0 / config.p) * P) / H
    h = src.grid.h if isinstance(src, Field) else None
    return FunctionalProfile(c, r, H, D, P, phi, N, Nt, p=config.p, h=h, n=config.n)


def weiss(profile: FunctionalProfile, mu: float) -> np.ndarray:
    """``H(r) / r^(n-1+2mu) * (N(r) - mu)`` per radius."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    r = profile.radii
    return profile.H / r ** (profile.n - 1 + 2 * mu) * (profile.N - mu)


def monneau(src, x0, mu: int, poly, radii, quad: QuadratureSpec = QuadratureSpec(),
            L: float | None = None) -> np.ndarray:
    """``r^-(n-1+2mu)`` times the half-circle integral of ``(u - poly(x - x0))^2``."""
    c = as_center(x0)
    r = np.atleast_1d(np.asarray(radii, dtype=float))
    _check_radii(src, c, r, L if L is not None else _domain_L(src, None))
    if getattr(poly, "degree", mu) != mu:
        raise ValueError(f"polynomial degree {poly.degree} differs from mu={mu}")

    def sq(u, pts):
        return (u - poly.value(pts - c)) ** 2

    return np.array([half_sphere_l2(src, c, ri, quad, sq) / ri ** (1 + 2 * mu) for ri in r])


def frequency_limit(profile: FunctionalProfile, snap: float = 0.25) -> FrequencyFit:
    """Extrapolate ``Ntilde(r)`` linearly to r = 0 and snap to an integer.

    Raises :class:`AmbiguousFrequency` when the intercept is farther than
    ``snap`` from every integer.
    """
    r = np.asarray(profile.radii, dtype=float)
    nt = np.asarray(profile.Ntilde, dtype=float)
    if len(r) < 4:
        raise ValueError("need at least 4 radii")
    if r.max() < 2 * r.min() * (1 - 1e-12):
        raise ValueError("radii must span at least one octave")
    if profile.h is not None and r.min() < 4 * profile.h - 1e-12:
        raise ValueError(f"smallest radius {r.min()} is below 4h = {4 * profile.h}")
    A = np.stack([np.ones_like(r), r], axis=1)
    coef, *_ = np.linalg.lstsq(A, nt, rcond=None)
    mu_hat, slope = float(coef[0]), float(coef[1])
    resid = float(np.sqrt(np.mean((A @ coef - nt) ** 2)))
    mu = int(round(mu_hat))
    fit = FrequencyFit(mu_hat, mu, slope, resid, abs(mu_hat - mu), r)
    if fit.gap > snap:
        raise AmbiguousFrequency(fit)
    return fit


def flux_balance(src, config: ProblemConfig, x0, r: float, dr: float,
                 quad: QuadratureSpec = QuadratureSpec()) -> tuple[float, float]:
    """Both sides of  |half circle| * phi'(r) / 2 = D(r) + P(r).

    ``phi'`` is a centred difference with step ``dr``.
    """
    prof = radial_profile(src, config, x0, [r - dr, r, r + dr], quad)
    dphi = (prof.phi[2] - prof.phi[0]) / (2 * dr)
    lhs = np.pi * r * dphi / 2.0
    return float(lhs), float(prof.D[1] + prof.P[1])
