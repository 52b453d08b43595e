"""Numerical audits of the monotonicity formulas, growth estimates and
maximum principles on solved fields and closed-form oracles.

Inequalities whose constants are only known to exist are audited by fitting
the smallest constant that makes them hold on the examined radii and asking
that constant to stay put (at most 2x growth) when the grid is refined.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .blowup import HomPoly, fit_blowup
from .core import Field, ProblemConfig
from .functionals import (
    AmbiguousFrequency,
    QuadratureSpec,
    as_center,
    flat_l2,
    frequency_limit,
    geometric_radii,
    half_ball_l2,
    half_ball_sup,
    half_sphere_sup,
    monneau,
    radial_profile,
    weiss,
)

__all__ = ["AuditKind", "AuditReport", "Tolerances", "run_audit", "run_suite", "reports_to_csv",
           "summary_text"]

log = logging.getLogger(__name__)


class AuditKind(str, enum.Enum):
    NTILDE_MONOTONE = "NTILDE_MONOTONE"
    N_LE_NTILDE = "N_LE_NTILDE"
    PHI_GROWTH = "PHI_GROWTH"
    DOUBLING = "DOUBLING"
    POINTWISE_GROWTH = "POINTWISE_GROWTH"
    NONDEGENERACY = "NONDEGENERACY"
    MONNEAU_ALMOST_MONOTONE = "MONNEAU_ALMOST_MONOTONE"
    WEISS_LINK = "WEISS_LINK"
    CACCIOPPOLI = "CACCIOPPOLI"
    TRACE_INEQUALITY = "TRACE_INEQUALITY"
    MAX_PRINCIPLE = "MAX_PRINCIPLE"
    SIGN_PRESERVATION = "SIGN_PRESERVATION"
    HOLDER_HALF = "HOLDER_HALF"


STATEMENTS = {
    AuditKind.NTILDE_MONOTONE: "perturbed frequency Ntilde(r) is nondecreasing in r",
    AuditKind.N_LE_NTILDE: "N(r) <= Ntilde(r)",
    AuditKind.PHI_GROWTH: "r^(-2 mu) phi(r) is nondecreasing",
    AuditKind.DOUBLING: "phi(R) <= exp(2C(1-2/p)(mu+d+1)(R-r)) (R/r)^(2(mu+d)) phi(r) for r < R <= R0(d)",
    AuditKind.POINTWISE_GROWTH: "sup_{B_r+}|u| <= C (r/2)^mu sup_{B_1/2+}|u|",
    AuditKind.NONDEGENERACY: "sup over the half sphere of radius r of |u| >= C r^mu",
    AuditKind.MONNEAU_ALMOST_MONOTONE: "d/dr (M_mu(r) + C r) >= 0",
    AuditKind.WEISS_LINK: "d/dr (M_mu(r) + C r) >= (2/r) W_mu(r)",
    AuditKind.CACCIOPPOLI: "int_{B_r}|grad u|^2 <= C r^-2 int_{B_2r} u^2",
    AuditKind.TRACE_INEQUALITY: "int_{Gamma_r} u^2 <= C (r D(r) + H(r))",
    AuditKind.MAX_PRINCIPLE: "sup |u| <= sup of |g| over the Dirichlet boundary",
    AuditKind.SIGN_PRESERVATION: "g >= 0 implies u >= 0 (and g <= 0 implies u <= 0)",
    AuditKind.HOLDER_HALF: "|u(x) - u(y)| <= C |x - y|^(1/2)",
}

FITTED = {
    AuditKind.DOUBLING,
    AuditKind.POINTWISE_GROWTH,
    AuditKind.NONDEGENERACY,
    AuditKind.MONNEAU_ALMOST_MONOTONE,
    AuditKind.WEISS_LINK,
    AuditKind.CACCIOPPOLI,
    AuditKind.TRACE_INEQUALITY,
    AuditKind.HOLDER_HALF,
}

# kinds whose hypotheses include p >= 2
NEEDS_P2 = {
    AuditKind.NTILDE_MONOTONE,
    AuditKind.N_LE_NTILDE,
    AuditKind.PHI_GROWTH,
    AuditKind.DOUBLING,
    AuditKind.POINTWISE_GROWTH,
    AuditKind.NONDEGENERACY,
    AuditKind.MONNEAU_ALMOST_MONOTONE,
    AuditKind.WEISS_LINK,
}

NEEDS_MU = {
    AuditKind.PHI_GROWTH,
    AuditKind.DOUBLING,
    AuditKind.POINTWISE_GROWTH,
    AuditKind.NONDEGENERACY,
    AuditKind.MONNEAU_ALMOST_MONOTONE,
    AuditKind.WEISS_LINK,
}


@dataclass(frozen=True)
class Tolerances:
    """Audit tolerances. ``mono_factor * h`` is the monotonicity slack on
    grids; ``analytic`` replaces it for closed-form oracles."""

    mono_factor: float = 50.0
    analytic: float = 1e-6
    n_le_ntilde: float = 1e-10
    max_principle: float = 1e-8
    sign: float = 1e-8
    growth: float = 2.0
    holder_growth: float = 1.5
    holder_distance: float = 0.25
    doubling_delta: float = 0.1
    r_fit: float = 0.2

    def mono(self, h: float | None) -> float:
        return self.analytic if h is None else self.mono_factor * h


@dataclass
class AuditReport:
    kind: AuditKind
    passed: bool
    violation: float
    fitted_C: float | None = None
    radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    notes: str = ""
    skipped: bool = False
    config_id: str = ""
    fitted_C_refined: float | None = None


@dataclass
class _Ctx:
    src: object
    config: ProblemConfig
    center: np.ndarray
    radii: np.ndarray
    quad: QuadratureSpec
    tol: Tolerances
    mu: int | None
    poly: HomPoly | None

    @property
    def h(self):
        return self.src.grid.h if isinstance(self.src, Field) else None

    @property
    def L(self):
        return self.src.grid.L if isinstance(self.src, Field) else self.config.L

    def profile(self, radii=None):
        r = self.radii if radii is None else radii
        return radial_profile(self.src, self.config, self.center, r, self.quad)


def _default_radii(src, config: ProblemConfig, center: np.ndarray) -> np.ndarray:
    if isinstance(src, Field):
        r = geometric_radii(src.grid.L, src.grid.h)
        L = src.grid.L
    else:
        r = geometric_radii(config.L)[-7:]
        L = config.L
    return r[abs(center[0]) + r <= L + 1e-12]


def _is_zero_at_center(ctx: _Ctx) -> bool:
    u0 = abs(float(ctx.src.value(ctx.center[None, :])[0]))
    if isinstance(ctx.src, Field):
        return u0 <= 1e-8 * max(ctx.src.dirichlet_sup(), 1e-300)
    return u0 <= 1e-12


# -- one function per kind; fitted kinds return (C, violation, notes) ---------


def _ntilde_monotone(ctx: _Ctx):
    prof = ctx.profile()
    worst = max(0.0, -float(np.min(np.diff(prof.Ntilde)))) if len(prof.radii) > 1 else 0.0
    return worst, worst <= ctx.tol.mono(ctx.h), f"min adjacent increment {np.min(np.diff(prof.Ntilde)):.3e}"


def _n_le_ntilde(ctx: _Ctx):
    prof = ctx.profile()
    worst = max(0.0, float(np.max(prof.N - prof.Ntilde)))
    return worst, worst <= ctx.tol.n_le_ntilde, ""


def _phi_growth(ctx: _Ctx):
    prof = ctx.profile()
    g = prof.radii ** (-2.0 * ctx.mu) * prof.phi
    worst = max(0.0, -float(np.min(np.diff(g)))) / float(np.max(np.abs(g)))
    return worst, worst <= ctx.tol.mono(ctx.h), f"relative drop of r^(-2mu) phi, mu={ctx.mu}"


def _doubling(ctx: _Ctx):
    prof = ctx.profile()
    mu, d, p = ctx.mu, ctx.tol.doubling_delta, ctx.config.p
    ok = np.cumprod(prof.Ntilde <= mu + d).astype(bool)
    r, phi = prof.radii[ok], prof.phi[ok]
    if len(r) < 2:
        return np.nan, np.inf, f"fewer than two radii with Ntilde <= mu + {d}"
    i, j = np.triu_indices(len(r), k=1)
    excess = np.log(phi[j] / phi[i]) - 2 * (mu + d) * np.log(r[j] / r[i])
    note = f"R0={r[-1]:.4g}, {len(i)} pairs"
    if p == 2:
        worst = max(0.0, float(np.max(excess)))
        return 0.0, worst if worst > ctx.tol.mono(ctx.h) else 0.0, note + "; p=2 removes the exponential factor"
    scale = 2 * (1 - 2 / p) * (mu + d + 1) * (r[j] - r[i])
    return max(0.0, float(np.max(excess / scale))), 0.0, note


def _pointwise_growth(ctx: _Ctx):
    top = min(0.5, ctx.L - abs(ctx.center[0]))
    S = half_ball_sup(ctx.src, ctx.center, top, ctx.quad)
    if not S > 0:
        return np.nan, np.inf, "u vanishes on the reference half ball"
    ratios = [half_ball_sup(ctx.src, ctx.center, r, ctx.quad) / ((r / 2) ** ctx.mu * S) for r in ctx.radii]
    return float(np.max(ratios)), 0.0, f"mu={ctx.mu}"


def _nondegeneracy(ctx: _Ctx):
    vals = [half_sphere_sup(ctx.src, ctx.center, r, ctx.quad) / r**ctx.mu for r in ctx.radii]
    C = float(np.min(vals))
    return C, 0.0 if C > 0 else np.inf, f"mu={ctx.mu}"


def _poly_for(ctx: _Ctx) -> HomPoly:
    if ctx.poly is not None:
        return ctx.poly
    r_fit = ctx.tol.r_fit
    if ctx.h is not None:
        r_fit = max(r_fit, 8 * ctx.h)
    r_fit = min(r_fit, 0.5 * ctx.L, ctx.L - abs(ctx.center[0]))
    return fit_blowup(ctx.src, ctx.config, ctx.center, ctx.mu, r_fit, ctx.quad).poly


def _monneau_values(ctx: _Ctx, radii):
    return monneau(ctx.src, ctx.center, ctx.mu, _poly_for(ctx), radii, ctx.quad, L=ctx.L)


def _monneau_almost_monotone(ctx: _Ctx):
    r = ctx.radii
    M = _monneau_values(ctx, r)
    slopes = np.diff(M) / np.diff(r)
    return max(0.0, -float(np.min(slopes))), 0.0, f"min slope {np.min(slopes):.4g}"


def _weiss_link(ctx: _Ctx):
    r = ctx.radii
    M = _monneau_values(ctx, r)
    slopes = np.diff(M) / np.diff(r)
    mid = 0.5 * (r[1:] + r[:-1])
    W = weiss(ctx.profile(mid), ctx.mu)
    need = 2.0 / mid * W - slopes
    return max(0.0, float(np.max(need))), 0.0, f"max (2/r)W - dM/dr = {np.max(need):.4g}"


def _caccioppoli(ctx: _Ctx):
    top = min(0.5 * ctx.L, ctx.L - abs(ctx.center[0]))
    r = ctx.radii[2 * ctx.radii <= top + 1e-12]
    if len(r) == 0:
        r = ctx.radii / 2
    prof = ctx.profile(r)
    big = np.array([half_ball_l2(ctx.src, ctx.center, 2 * ri, ctx.quad) for ri in r])
    return float(np.max(r**2 * prof.D / big)), 0.0, f"{len(r)} radii"


def _trace_inequality(ctx: _Ctx):
    prof = ctx.profile()
    flat = np.array([flat_l2(ctx.src, ctx.center, r, ctx.quad) for r in prof.radii])
    return float(np.max(flat / (prof.radii * prof.D + prof.H))), 0.0, ""


def _samples(ctx: _Ctx, spacing=0.02):
    """Nodes (or a lattice for analytic sources) in the largest half ball."""
    R = float(np.max(ctx.radii))
    if isinstance(ctx.src, Field):
        pts = ctx.src.grid.points
        sel = np.linalg.norm(pts - ctx.center, axis=1) <= R + 1e-12
        return pts[sel], ctx.src.values[sel], R
    m = int(np.ceil(R / spacing))
    x = ctx.center[0] + spacing * np.arange(-m, m + 1)
    y = spacing * np.arange(0, m + 1)
    X, Y = np.meshgrid(x, y, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    pts = pts[np.linalg.norm(pts - ctx.center, axis=1) <= R + 1e-12]
    return pts, ctx.src.value(pts), R


def _holder_half(ctx: _Ctx):
    pts, u, R = _samples(ctx)
    pairs = cKDTree(pts).query_pairs(ctx.tol.holder_distance, output_type="ndarray")
    if len(pairs) == 0:
        return np.nan, np.inf, "no sample pairs"
    d = np.linalg.norm(pts[pairs[:, 0]] - pts[pairs[:, 1]], axis=1)
    q = np.abs(u[pairs[:, 0]] - u[pairs[:, 1]]) / np.sqrt(d)
    return float(np.max(q)), 0.0, f"{len(pairs)} pairs within {ctx.tol.holder_distance} in B_{R:.3g}+"


def _max_principle(ctx: _Ctx):
    if isinstance(ctx.src, Field):
        bound = ctx.src.dirichlet_sup()
        worst = max(0.0, float(np.max(np.abs(ctx.src.values))) - bound)
    else:
        R = float(np.max(ctx.radii))
        worst = max(0.0, half_ball_sup(ctx.src, ctx.center, R, ctx.quad)
                    - half_sphere_sup(ctx.src, ctx.center, R, ctx.quad))
    return worst, worst <= ctx.tol.max_principle, ""


def _sign_preservation(ctx: _Ctx):
    if isinstance(ctx.src, Field):
        g = ctx.src.values[ctx.src.grid.dirichlet]
        u = ctx.src.values
    else:
        R = float(np.max(ctx.radii))
        theta, _ = ctx.quad.angles
        g = ctx.src.value(ctx.center + R * np.stack([np.cos(theta), np.sin(theta)], axis=1))
        u = _samples(ctx)[1]
    if np.min(g) >= 0:
        worst = max(0.0, -float(np.min(u)))
        note = "nonnegative data"
    elif np.max(g) <= 0:
        worst = max(0.0, float(np.max(u)))
        note = "nonpositive data"
    else:
        return 0.0, True, "data changes sign: nothing to check"
    return worst, worst <= ctx.tol.sign, note


_DIRECT = {
    AuditKind.NTILDE_MONOTONE: _ntilde_monotone,
    AuditKind.N_LE_NTILDE: _n_le_ntilde,
    AuditKind.PHI_GROWTH: _phi_growth,
    AuditKind.MAX_PRINCIPLE: _max_principle,
    AuditKind.SIGN_PRESERVATION: _sign_preservation,
}

_FITTED = {
    AuditKind.DOUBLING: _doubling,
    AuditKind.POINTWISE_GROWTH: _pointwise_growth,
    AuditKind.NONDEGENERACY: _nondegeneracy,
    AuditKind.MONNEAU_ALMOST_MONOTONE: _monneau_almost_monotone,
    AuditKind.WEISS_LINK: _weiss_link,
    AuditKind.CACCIOPPOLI: _caccioppoli,
    AuditKind.TRACE_INEQUALITY: _trace_inequality,
    AuditKind.HOLDER_HALF: _holder_half,
}


def _make_ctx(kind, src, config, center, radii, quad, tol, mu, poly):
    c = as_center(center)
    r = _default_radii(src, config, c) if radii is None else np.sort(np.asarray(radii, dtype=float))
    nodal_only = isinstance(src, Field) and kind in (AuditKind.MAX_PRINCIPLE, AuditKind.SIGN_PRESERVATION)
    if len(r) == 0 and not nodal_only:
        raise ValueError("no admissible radii: the grid is too coarse for radii >= 8h")
    ctx = _Ctx(src, config, c, r, quad, tol, mu, poly)
    if kind in NEEDS_MU and ctx.mu is None:
        fit = frequency_limit(ctx.profile())
        ctx.mu = fit.mu
    return ctx


def _stable(kind: AuditKind, C: float, C_ref: float, tol: Tolerances) -> bool:
    if kind == AuditKind.NONDEGENERACY:
        return C_ref >= C / tol.growth
    factor = tol.holder_growth if kind == AuditKind.HOLDER_HALF else tol.growth
    return C_ref <= factor * C + tol.analytic


def run_audit(kind: AuditKind, field, config: ProblemConfig, center=0.0, radii=None,
              quad: QuadratureSpec | None = None, tol: Tolerances | None = None,
              mu: int | None = None, poly: HomPoly | None = None,
              refined: Field | None = None, config_id: str = "") -> AuditReport:
    """Evaluate one audit.

    ``field`` is a solved :class:`Field` or a closed-form source. For fitted
    kinds, passing ``refined`` (the same problem solved on a finer grid)
    enables the refinement-stability check on the fitted constant.
    """
    kind = AuditKind(kind)
    quad = quad or QuadratureSpec()
    tol = tol or Tolerances()
    base = dict(kind=kind, config_id=config_id)
    if kind in NEEDS_P2 and config.p < 2:
        return AuditReport(passed=True, violation=0.0, skipped=True,
                           notes="outside p >= 2 hypothesis; audit skipped", **base)
    try:
        ctx = _make_ctx(kind, field, config, center, radii, quad, tol, mu, poly)
    except AmbiguousFrequency as exc:
        return AuditReport(passed=False, violation=float(exc.fit.gap),
                           notes=f"ambiguous frequency: {exc}", **base)
    base["radii"] = ctx.radii

    if kind in (AuditKind.MONNEAU_ALMOST_MONOTONE, AuditKind.WEISS_LINK):
        if ctx.mu < 1 or not _is_zero_at_center(ctx):
            return AuditReport(passed=True, violation=0.0, skipped=True,
                               notes="centre is not a zero of u with mu >= 1; audit skipped", **base)

    if kind in _DIRECT:
        worst, ok, note = _DIRECT[kind](ctx)
        return AuditReport(passed=bool(ok), violation=float(worst), notes=note, **base)

    C, worst, note = _FITTED[kind](ctx)
    report = AuditReport(passed=bool(np.isfinite(C) and C >= 0 and worst == 0), violation=float(worst),
                         fitted_C=None if not np.isfinite(C) else float(C), notes=note, **base)
    if refined is None or not report.passed:
        return report
    cfg_ref = config.with_h(refined.grid.h) if isinstance(refined, Field) else config
    # same examined radii on both grids, so only the resolution changes; mu and
    # the reference polynomial are re-derived on the refined grid
    try:
        rctx = _make_ctx(kind, refined, cfg_ref, center, ctx.radii, quad, tol, mu, poly)
    except AmbiguousFrequency as exc:
        report.passed = False
        report.notes += f"; refined grid: {exc}"
        return report
    C_ref, worst_ref, _ = _FITTED[kind](rctx)
    report.fitted_C_refined = float(C_ref)
    if worst_ref != 0 or not np.isfinite(C_ref):
        report.passed = False
        report.violation = float(worst_ref)
        report.notes += "; inequality fails on refined grid"
        return report
    if not _stable(kind, C, C_ref, tol):
        report.passed = False
        if kind == AuditKind.NONDEGENERACY:
            report.violation = float(C / tol.growth - C_ref)
        else:
            factor = tol.holder_growth if kind == AuditKind.HOLDER_HALF else tol.growth
            report.violation = float(C_ref - factor * C)
    report.notes += f"; C={C:.4g} -> {C_ref:.4g} under refinement"
    return report


def run_suite(instances, kinds, h: float | None = None, refine: bool = True,
              quad: QuadratureSpec | None = None, tol: Tolerances | None = None,
              opts=None) -> list[AuditReport]:
    """Solve each instance (and its refinement) once and run every kind on it.

    Failures of individual audits are recorded in the reports; the suite
    keeps going. Reports come back ordered by instance, then by ``kinds``.
    """
    from .instances import solve_instance

    kinds = [AuditKind(k) for k in kinds]
    reports: list[AuditReport] = []
    if not kinds:
        return reports
    for inst in instances:
        try:
            solved = solve_instance(inst, h=h, opts=opts)
            fine = solve_instance(inst, h=solved.config.h / 2, opts=opts) if refine else None
        except Exception as exc:  # noqa: BLE001 - recorded, suite continues
            log.exception("instance %s failed to solve", inst.id)
            reports += [AuditReport(k, False, np.inf, notes=f"solve failed: {exc}", config_id=inst.id)
                        for k in kinds]
            continue
        for kind in kinds:
            try:
                rep = run_audit(kind, solved.field, solved.config, center=solved.center,
                                quad=quad, tol=tol,
                                refined=None if fine is None else fine.field, config_id=inst.id)
                if kind in (AuditKind.MAX_PRINCIPLE, AuditKind.SIGN_PRESERVATION) and fine is not None:
                    rep_f = run_audit(kind, fine.field, fine.config, center=fine.center,
                                      quad=quad, tol=tol, config_id=inst.id)
                    if not rep_f.passed:
                        rep.passed = False
                        rep.violation = max(rep.violation, rep_f.violation)
                        rep.notes += "; fails on refined grid"
            except Exception as exc:  # noqa: BLE001
                log.exception("audit %s on %s raised", kind.value, inst.id)
                rep = AuditReport(kind, False, np.inf, notes=f"error: {exc}", config_id=inst.id)
            reports.append(rep)
    return reports


def _fmt(x) -> str:
    return "" if x is None else f"{float(x):.17g}"


def reports_to_csv(reports, fh=None) -> str:
    """Columns config_id,kind,pass,violation,fitted_C,notes."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["config_id", "kind", "pass", "violation", "fitted_C", "notes"])
    for r in reports:
        w.writerow([r.config_id, r.kind.value, int(r.passed), _fmt(r.violation), _fmt(r.fitted_C), r.notes])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def summary_text(reports) -> str:
    lines = []
    for r in reports:
        status = "SKIP" if r.skipped else ("PASS" if r.passed else "FAIL")
        C = "" if r.fitted_C is None else f" C={r.fitted_C:.6g}"
        lines.append(f"{status:4s} {r.config_id:>3s} {r.kind.value:<24s} violation={r.violation:.3e}{C}  {r.notes}")
    n_fail = sum(not r.passed for r in reports)
    lines.append(f"{len(reports)} audits, {n_fail} failed")
    return "\n".join(lines) + "\n"
