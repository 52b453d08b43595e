"""Command line entry point: ``thinpen solve|functionals|blowup|freeboundary|verify``.

Configs are plain sectioned ``key = value`` files::

    # instance C
    [problem]
    p = 2
    k_plus = 1
    g = x1 - 0.1

Exit codes: 0 success, 1 scientific failure (no convergence, failed audit),
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import difflib
import io
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .audits import AuditKind, reports_to_csv, run_suite, summary_text
from .blowup import fit_blowup
from .core import ExprError, Field, GridError, ProblemConfig, build_grid
from .freeboundary import classify, points_to_csv, trace_zero_set
from .functionals import (
    AmbiguousFrequency,
    DegenerateDenominator,
    QuadratureSpec,
    frequency_limit,
    geometric_radii,
    monneau,
    radial_profile,
)
from .instances import Instance, solve_instance
from .solver import SolveOptions, SolverError

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "dispatch", "main",
           "write_field_csv", "read_field_csv", "CONFIG_DIR"]

log = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).parent / "configs"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SUBCOMMANDS = ("solve", "functionals", "blowup", "freeboundary", "verify")

SCHEMA = {
    "problem": ("n", "p", "k_plus", "k_minus", "L", "h", "g", "pin_zero"),
    "solver": ("method", "max_iters", "grad_tol", "initial_guess"),
    "analysis": ("id", "centers", "radii", "m_theta", "m_rho", "mu", "tau_grad", "r_fit", "field"),
    "output": ("dir", "formats"),
    "suite": ("configs", "kinds", "refine"),
}
FORMATS = ("csv", "summary")


class ConfigError(ValueError):
    """Bad config text; carries the offending key and line when known."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.key = key
        self.line = line


@dataclass(frozen=True)
class AnalysisConfig:
    centers: tuple = ()  # x1 values; empty means "the trace zero set"
    radii: tuple | None = None  # None means geometric
    quad: QuadratureSpec = QuadratureSpec()
    mu: int | None = None
    tau_grad: float | None = None
    r_fit: float = 0.2
    field: Path | None = None


@dataclass(frozen=True)
class SuiteConfig:
    configs: tuple = ()
    kinds: tuple = tuple(AuditKind)
    refine: bool = True


@dataclass(frozen=True)
class RunConfig:
    id: str
    problem: ProblemConfig
    pin_zero: float | None = None
    solver: SolveOptions = SolveOptions()
    analysis: AnalysisConfig = AnalysisConfig()
    out_dir: Path = Path("out")
    formats: tuple = FORMATS
    suite: SuiteConfig | None = None
    path: Path | None = None

    def instance(self) -> Instance:
        center = self.analysis.centers[0] if self.analysis.centers else None
        return Instance(self.id, self.problem, center, self.pin_zero)


# -- parsing -----------------------------------------------------------------


def _read_sections(text: str) -> dict:
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("unterminated section header", line=lineno)
            name = line[1:-1].strip()
            if name not in SCHEMA:
                hint = difflib.get_close_matches(name, SCHEMA, n=1)
                extra = f"; did you mean [{hint[0]}]?" if hint else ""
                raise ConfigError(f"unknown section [{name}]{extra}", line=lineno)
            current = sections.setdefault(name, {})
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {line!r}", line=lineno)
        if current is None:
            raise ConfigError("key outside of any section", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        section = next(s for s, v in sections.items() if v is current)
        if key not in SCHEMA[section]:
            hint = difflib.get_close_matches(key, SCHEMA[section], n=1)
            extra = f"; did you mean '{hint[0]}'?" if hint else ""
            raise ConfigError(f"unknown key in [{section}]{extra}", key=key, line=lineno)
        if key in current:
            raise ConfigError("duplicate key", key=key, line=lineno)
        current[key] = (value, lineno)
    return sections


class _Reader:
    def __init__(self, entries: dict):
        self.entries = entries

    def get(self, key, conv, default):
        if key not in self.entries:
            return default
        text, line = self.entries[key]
        try:
            return conv(text)
        except (ValueError, ExprError) as exc:
            raise ConfigError(f"invalid value {text!r}: {exc}", key=key, line=line) from None

    def line(self, key):
        return self.entries.get(key, (None, None))[1]

    def check(self, key, ok: bool, message: str):
        if not ok:
            raise ConfigError(message, key=key, line=self.line(key))


def _float_list(text: str) -> tuple:
    return tuple(float(s) for s in text.replace(";", ",").split(",") if s.strip())


def _centers(text: str) -> tuple:
    out = []
    for item in text.split(";"):
        parts = [float(s) for s in item.split(",") if s.strip()]
        if not parts:
            continue
        if len(parts) == 2 and parts[1] != 0.0:
            raise ValueError(f"centre ({parts[0]}, {parts[1]}) is not on x_n = 0")
        if len(parts) > 2:
            raise ValueError("centres are 'x1' or 'x1,xn'")
        out.append(parts[0])
    return tuple(out)


def _bool(text: str) -> bool:
    t = text.lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected true or false")


def _problem(r: _Reader) -> ProblemConfig:
    kw = dict(
        n=r.get("n", int, 2),
        p=r.get("p", float, 2.0),
        k_plus=r.get("k_plus", float, 0.0),
        k_minus=r.get("k_minus", float, 0.0),
        L=r.get("L", float, 1.0),
        h=r.get("h", float, 0.05),
        g_expr=r.get("g", str, "0"),
    )
    r.check("n", kw["n"] in (2, 3), "n must be 2 or 3")
    r.check("p", kw["p"] > 1 and np.isfinite(kw["p"]), "p must be a finite number > 1")
    for k in ("k_plus", "k_minus"):
        r.check(k, kw[k] >= 0 and np.isfinite(kw[k]), f"{k} must be finite and >= 0")
    r.check("L", kw["L"] > 0, "L must be positive")
    r.check("h", kw["h"] > 0, "h must be positive")
    try:
        return ProblemConfig(**kw)
    except GridError as exc:
        key = "h" if "h=" in str(exc) else None
        raise ConfigError(str(exc), key=key, line=r.line(key) if key else None) from None
    except ExprError as exc:
        raise ConfigError(f"bad expression: {exc}", key="g", line=r.line("g")) from None


def _solver(r: _Reader) -> SolveOptions:
    kw = dict(method=r.get("method", str, "newton"),
              max_iters=r.get("max_iters", int, 200),
              grad_tol=r.get("grad_tol", float, 1e-10),
              initial_guess=r.get("initial_guess", str, "dirichlet_harmonic_lift"))
    for key in kw:
        try:
            SolveOptions(**{key: kw[key]})
        except SolverError as exc:
            raise ConfigError(str(exc), key=key, line=r.line(key)) from None
    return SolveOptions(**kw)


def _analysis(r: _Reader, base: Path) -> AnalysisConfig:
    radii_text = r.get("radii", str, "geometric")
    radii = None if radii_text == "geometric" else r.get("radii", _float_list, None)
    if radii is not None:
        r.check("radii", len(radii) > 0 and all(x > 0 for x in radii),
                "radii must be 'geometric' or a list of positive numbers")
    try:
        quad = QuadratureSpec(r.get("m_theta", int, 256), r.get("m_rho", int, 128))
    except ValueError as exc:
        raise ConfigError(str(exc), key="m_rho", line=r.line("m_rho") or r.line("m_theta")) from None
    mu = r.get("mu", int, None)
    r.check("mu", mu is None or mu >= 0, "mu must be >= 0")
    tau = r.get("tau_grad", float, None)
    r.check("tau_grad", tau is None or tau > 0, "tau_grad must be positive")
    r_fit = r.get("r_fit", float, 0.2)
    r.check("r_fit", r_fit > 0, "r_fit must be positive")
    fpath = r.get("field", str, None)
    return AnalysisConfig(
        centers=r.get("centers", _centers, ()),
        radii=radii,
        quad=quad,
        mu=mu,
        tau_grad=tau,
        r_fit=r_fit,
        field=None if fpath is None else (base / fpath),
    )


def _suite(r: _Reader, base: Path) -> SuiteConfig:
    names = r.get("configs", lambda t: tuple(s.strip() for s in t.split(",") if s.strip()), ())
    kinds_text = r.get("kinds", str, "all")
    if kinds_text == "all":
        kinds = tuple(AuditKind)
    else:
        try:
            kinds = tuple(AuditKind(k.strip()) for k in kinds_text.split(",") if k.strip())
        except ValueError as exc:
            raise ConfigError(str(exc), key="kinds", line=r.line("kinds")) from None
    return SuiteConfig(tuple(base / n for n in names), kinds, r.get("refine", _bool, True))


def parse_config(text: str, path: Path | None = None) -> RunConfig:
    """Parse config text; ``path`` anchors relative paths and names the config."""
    sections = _read_sections(text)
    base = Path(".") if path is None else path.parent
    prob = _Reader(sections.get("problem", {}))
    problem = _problem(prob)
    pin = prob.get("pin_zero", float, None)
    ana = _Reader(sections.get("analysis", {}))
    analysis = _analysis(ana, base)
    out = _Reader(sections.get("output", {}))
    formats = out.get("formats", lambda t: tuple(s.strip() for s in t.split(",") if s.strip()), FORMATS)
    out.check("formats", set(formats) <= set(FORMATS), f"formats must be a subset of {FORMATS}")
    default_id = "config" if path is None else path.stem
    return RunConfig(
        id=ana.get("id", str, default_id),
        problem=problem,
        pin_zero=pin,
        solver=_solver(_Reader(sections.get("solver", {}))),
        analysis=analysis,
        out_dir=Path(out.get("dir", str, "out")),
        formats=formats,
        suite=_suite(_Reader(sections["suite"]), base) if "suite" in sections else None,
        path=path,
    )


def resolve_config_path(path: str | Path) -> Path:
    """``path`` itself, or a config shipped with the package of that name."""
    p = Path(path)
    if p.is_file():
        return p
    shipped = CONFIG_DIR / p.name
    if not p.parent.parts and shipped.is_file():
        return shipped
    raise FileNotFoundError(f"config file not found: {path}")


def load_config(path) -> RunConfig:
    p = resolve_config_path(path)
    return parse_config(p.read_text(), p)


# -- field files --------------------------------------------------------------


def write_field_csv(field: Field, fh=None) -> str:
    """Lattice indices, coordinates and value of every node."""
    grid = field.grid
    lat = grid.lattice_index(np.arange(grid.size))
    pts = grid.points
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    idx_cols = [f"i{d + 1}" for d in range(grid.n)]
    x_cols = [f"x{d + 1}" for d in range(grid.n - 1)] + ["xn"]
    w.writerow(idx_cols + x_cols + ["u"])
    for k in range(grid.size):
        w.writerow([*map(int, lat[k]), *(f"{float(x):.17g}" for x in pts[k]), f"{float(field.values[k]):.17g}"])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def read_field_csv(path, config: ProblemConfig) -> Field:
    """Re-ingest a field written by :func:`write_field_csv` on ``config``'s grid."""
    grid = build_grid(config)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n = grid.n
    if data.shape != (grid.size, 2 * n + 1):
        raise ValueError(f"field file {path} does not match the configured grid")
    flat = np.ravel_multi_index(tuple(data[:, d].astype(int) for d in range(n)), grid.shape)
    values = np.empty(grid.size)
    values[flat] = data[:, -1]
    return Field(grid, values)


# -- subcommands ---------------------------------------------------------------


def _write(out: Path, name: str, text: str):
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def _solved(cfg: RunConfig):
    """Solved field, effective config and solve report (None when re-ingested)."""
    if cfg.analysis.field is not None:
        return read_field_csv(cfg.analysis.field, cfg.problem), cfg.problem, None
    s = solve_instance(replace(cfg.instance(), center=0.0), opts=cfg.solver)
    return s.field, s.config, s.report


def _centers_for(cfg: RunConfig, field: Field, problem: ProblemConfig) -> list[float]:
    if cfg.analysis.centers:
        return list(cfg.analysis.centers)
    return [p.x for p in trace_zero_set(field, problem)]


def _radii_for(cfg: RunConfig, field: Field, x1: float) -> np.ndarray:
    if cfg.analysis.radii is not None:
        return np.array(cfg.analysis.radii)
    r = geometric_radii(field.grid.L, field.grid.h)
    return r[abs(x1) + r <= field.grid.L + 1e-12]


def _report_text(report, problem: ProblemConfig) -> str:
    # wall time is left out so repeated runs write identical bytes
    rows = [("converged", str(report.converged).lower()), ("iterations", report.iterations),
            ("energy", f"{report.energy:.17g}"), ("grad_norm", f"{report.grad_norm:.17g}"),
            ("method", report.method), ("h", f"{problem.h:.17g}"), ("g", problem.g_expr)]
    return "".join(f"{k} = {v}\n" for k, v in rows)


def cmd_solve(cfg: RunConfig) -> int:
    field, problem, report = _solved(cfg)
    if "csv" in cfg.formats:
        _write(cfg.out_dir, "field.csv", write_field_csv(field))
    if report is None:
        return EXIT_OK
    if "summary" in cfg.formats:
        _write(cfg.out_dir, "solve_report.txt", _report_text(report, problem))
    print(f"converged={report.converged} iterations={report.iterations} "
          f"grad_norm={report.grad_norm:.3e} energy={report.energy:.12g}")
    return EXIT_OK if report.converged else EXIT_FAIL


def cmd_functionals(cfg: RunConfig) -> int:
    field, problem, report = _solved(cfg)
    centers = _centers_for(cfg, field, problem)
    summary = []
    for i, x1 in enumerate(centers):
        radii = _radii_for(cfg, field, x1)
        prof = radial_profile(field, problem, x1, radii, cfg.analysis.quad)
        mu = cfg.analysis.mu
        if mu is not None and mu >= 1:
            r_fit = min(max(cfg.analysis.r_fit, 8 * field.grid.h), float(radii.max()))
            poly = fit_blowup(field, problem, x1, mu, r_fit, cfg.analysis.quad).poly
            prof = replace(prof.with_weiss(mu), M=monneau(field, x1, mu, poly, prof.radii, cfg.analysis.quad))
        if "csv" in cfg.formats:
            _write(cfg.out_dir, f"profile_{i}.csv", prof.to_csv())
        try:
            fit = frequency_limit(prof)
            summary.append(f"center {x1:.17g}: mu_hat = {fit.mu_hat:.6f}, mu = {fit.mu}\n")
        except AmbiguousFrequency as exc:
            summary.append(f"center {x1:.17g}: ambiguous frequency, mu_hat = {exc.fit.mu_hat:.6f}\n")
        except ValueError as exc:
            summary.append(f"center {x1:.17g}: no frequency fit ({exc})\n")
    if "summary" in cfg.formats:
        _write(cfg.out_dir, "functionals.txt", "".join(summary))
    sys.stdout.write("".join(summary))
    return EXIT_OK if report is None or report.converged else EXIT_FAIL


def cmd_blowup(cfg: RunConfig) -> int:
    field, problem, report = _solved(cfg)
    rows = [["x1", "n", "mu", "coeff", "residual", "r_fit"]]
    status = EXIT_OK
    for x1 in _centers_for(cfg, field, problem):
        mu = cfg.analysis.mu
        if mu is None:
            try:
                mu = frequency_limit(radial_profile(field, problem, x1, _radii_for(cfg, field, x1),
                                                    cfg.analysis.quad)).mu
            except AmbiguousFrequency as exc:
                log.warning("centre %g: %s", x1, exc)
                status = EXIT_FAIL
                continue
        if mu < 1:
            log.warning("centre %g: frequency 0, no blow-up polynomial", x1)
            continue
        for r_fit in (cfg.analysis.r_fit, cfg.analysis.r_fit / 2):
            if r_fit < 8 * field.grid.h - 1e-12:
                continue
            fit = fit_blowup(field, problem, x1, mu, r_fit, cfg.analysis.quad)
            n, deg, *coeffs = fit.poly.row()
            rows += [[f"{x1:.17g}", n, deg, *(f"{c:.17g}" for c in coeffs),
                      f"{fit.residual:.17g}", f"{r_fit:.17g}"]]
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    if "csv" in cfg.formats:
        _write(cfg.out_dir, "blowup.csv", buf.getvalue())
    sys.stdout.write(buf.getvalue())
    if report is not None and not report.converged:
        status = EXIT_FAIL
    return status


def cmd_freeboundary(cfg: RunConfig) -> int:
    field, problem, report = _solved(cfg)
    pts = trace_zero_set(field, problem)
    pts = classify(pts, field, problem, cfg.analysis.tau_grad, cfg.analysis.radii, cfg.analysis.quad)
    text = points_to_csv(pts)
    if "csv" in cfg.formats:
        _write(cfg.out_dir, "points.csv", text)
    if "summary" in cfg.formats:
        lines = [f"{p.x:.12g} {p.classification.value} grad={p.grad_norm:.4g} mu={p.mu} {p.note}".rstrip()
                 for p in pts]
        _write(cfg.out_dir, "freeboundary.txt", "\n".join(lines) + "\n")
    sys.stdout.write(text)
    return EXIT_OK if report is None or report.converged else EXIT_FAIL


def _suite_members(cfg: RunConfig, h: float | None) -> list[RunConfig]:
    if cfg.suite is None or not cfg.suite.configs:
        members = [cfg]
    else:
        members = [load_config(p) for p in cfg.suite.configs]
    if h is not None:
        members = [replace(m, problem=m.problem.with_h(h)) for m in members]
    return members


def cmd_verify(cfg: RunConfig, h: float | None = None) -> int:
    suite = cfg.suite or SuiteConfig()
    members = _suite_members(cfg, h)
    reports = run_suite([m.instance() for m in members], suite.kinds, refine=suite.refine,
                        quad=cfg.analysis.quad, opts=cfg.solver)
    if "csv" in cfg.formats:
        _write(cfg.out_dir, "audit_report.csv", reports_to_csv(reports))
    text = summary_text(reports)
    if "summary" in cfg.formats:
        _write(cfg.out_dir, "audit_summary.txt", text)
    sys.stdout.write(text)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def dispatch(subcommand: str, cfg: RunConfig, h: float | None = None) -> int:
    """Run one subcommand; returns the process exit code."""
    if subcommand not in SUBCOMMANDS:
        print(f"unknown subcommand {subcommand!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if subcommand == "verify":
            return cmd_verify(cfg, h)
        if h is not None:
            cfg = replace(cfg, problem=cfg.problem.with_h(h))
        return {"solve": cmd_solve, "functionals": cmd_functionals, "blowup": cmd_blowup,
                "freeboundary": cmd_freeboundary}[subcommand](cfg)
    except (ConfigError, GridError, SolverError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateDenominator as exc:
        print(f"error: H vanishes at radius {exc.radius}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        # geometry and centre validation
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="thinpen", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="config file, or the name of a shipped config")
    ap.add_argument("--out", help="output directory (overrides [output] dir)")
    ap.add_argument("--h", type=float, help="grid spacing override")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.h is not None and not args.h > 0:
            raise ConfigError("--h must be positive")
        if args.out is not None:
            cfg = replace(cfg, out_dir=Path(args.out))
        if args.h is not None and args.subcommand != "verify":
            cfg.problem.with_h(args.h)
    except (ConfigError, GridError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return dispatch(args.subcommand, cfg, args.h)


if __name__ == "__main__":
    sys.exit(main())
