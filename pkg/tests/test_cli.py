import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from thinpen.cli import (
    CONFIG_DIR,
    ConfigError,
    dispatch,
    load_config,
    main,
    parse_config,
    read_field_csv,
    write_field_csv,
)
from thinpen.audits import AuditKind
from thinpen.solver import solve


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_config_defaults(tmp_path):
    cfg = load_config(write(tmp_path, "[problem]\ng = x1\n"))
    assert cfg.problem.p == 2.0 and cfg.problem.h == 0.05 and cfg.problem.L == 1.0
    assert cfg.solver.method == "newton" and cfg.solver.max_iters == 200
    assert cfg.analysis.radii is None and cfg.analysis.quad.m_theta == 256
    assert cfg.formats == ("csv", "summary")
    assert cfg.id == "run" and cfg.suite is None


def test_negative_coefficient_named(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, "# comment\n[problem]\n\nk_plus = -1\n"))
    assert exc.value.key == "k_plus" and exc.value.line == 4
    assert "k_plus" in str(exc.value)


def test_typo_suggestion(tmp_path):
    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, "[problem]\nkplus = 1\n"))
    assert "did you mean 'k_plus'" in str(exc.value)
    assert exc.value.line == 2


@pytest.mark.parametrize("text,key", [
    ("[problemm]\n", None),
    ("p = 2\n", None),
    ("[problem]\np\n", None),
    ("[problem]\np = 2\np = 3\n", "p"),
    ("[problem]\np = two\n", "p"),
    ("[problem]\np = 0.5\n", "p"),
    ("[problem]\nh = 0.3\n", "h"),
    ("[problem]\ng = x1 +\n", "g"),
    ("[solver]\nmethod = bfgs\n", "method"),
    ("[solver]\nmax_iters = 0\n", "max_iters"),
    ("[analysis]\ncenters = 0.1, 0.2\n", "centers"),
    ("[analysis]\nradii = 0.1, -0.2\n", "radii"),
    ("[analysis]\nm_rho = 33\n", "m_rho"),
    ("[output]\nformats = csv, pdf\n", "formats"),
    ("[suite]\nkinds = DOUBLING, NOPE\n", "kinds"),
])
def test_validation_errors(text, key):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.key == key
    assert exc.value.line is not None or key is None


def test_section_typo_suggestion():
    with pytest.raises(ConfigError, match=r"did you mean \[solver\]"):
        parse_config("[solvr]\n")


def test_analysis_parsing(tmp_path):
    cfg = parse_config("[analysis]\ncenters = 0.1; -0.2, 0\nradii = 0.1, 0.2 ,0.4\nmu = 2\n"
                       "tau_grad = 0.3\nr_fit = 0.1\n[suite]\nkinds = DOUBLING, HOLDER_HALF\nrefine = no\n")
    assert cfg.analysis.centers == (0.1, -0.2)
    assert cfg.analysis.radii == (0.1, 0.2, 0.4)
    assert cfg.analysis.mu == 2 and cfg.analysis.tau_grad == 0.3 and cfg.analysis.r_fit == 0.1
    assert cfg.suite.kinds == (AuditKind.DOUBLING, AuditKind.HOLDER_HALF)
    assert cfg.suite.refine is False


def test_shipped_configs_load():
    for name in ("A", "B", "C", "D"):
        cfg = load_config(CONFIG_DIR / f"{name}.cfg")
        assert cfg.id == name and cfg.problem.h == 0.02
    assert load_config("D.cfg").pin_zero == 0.0
    suite = load_config("verify.cfg")
    assert [p.name for p in suite.suite.configs] == ["A.cfg", "B.cfg", "C.cfg", "D.cfg"]


def test_missing_file_exit_code(capsys):
    assert main(["solve", "--config", "/nonexistent/x.cfg"]) == 2
    assert "not found" in capsys.readouterr().err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["explode", "--config", "C.cfg"])
    assert exc.value.code == 2


def test_solve_writes_field_and_report(tmp_path):
    cfg = write(tmp_path, "[problem]\nk_plus = 1\ng = x1 - 0.1\nh = 0.1\n")
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    report = (tmp_path / "o" / "solve_report.txt").read_text()
    assert "converged = true" in report and "wall" not in report
    header = (tmp_path / "o" / "field.csv").read_text().splitlines()[0]
    assert header == "i1,i2,x1,xn,u"


def test_forced_non_convergence_exit_one(tmp_path):
    cfg = write(tmp_path, "[problem]\nk_plus = 1\ng = x1 - 0.1\nh = 0.02\n[solver]\nmax_iters = 1\n")
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "converged = false" in (tmp_path / "solve_report.txt").read_text()


def test_off_gamma_center_exit_two(tmp_path):
    cfg = write(tmp_path, "[problem]\ng = x1\nh = 0.1\n[analysis]\ncenters = 0.0, 0.3\n")
    assert main(["functionals", "--config", str(cfg)]) == 2
    cfg = write(tmp_path, "[problem]\ng = x1\nh = 0.1\n[analysis]\ncenters = 1.5\n")
    assert main(["functionals", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_grid_override(tmp_path):
    assert main(["solve", "--config", "A.cfg", "--h", "0.03"]) == 2
    assert main(["solve", "--config", "A.cfg", "--h", "0.1", "--out", str(tmp_path)]) == 0
    assert "h = 0.10000000000000001" in (tmp_path / "solve_report.txt").read_text()


def test_functionals_and_blowup_outputs(tmp_path):
    assert main(["functionals", "--config", "D.cfg", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "profile_0.csv").read_text().splitlines()
    assert lines[0] == "r,H,D,P,phi,N,Ntilde,W,M" and len(lines) == 5
    assert "mu = 2" in (tmp_path / "functionals.txt").read_text()
    assert main(["blowup", "--config", "D.cfg", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "blowup.csv").read_text().splitlines()
    assert rows[0] == "x1,n,mu,coeff,residual,r_fit"
    assert rows[1].startswith("0,2,2,0.523")


def test_freeboundary_output(tmp_path):
    assert main(["freeboundary", "--config", "C.cfg", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "points.csv").read_text().splitlines()
    assert len(rows) == 2 and ",REGULAR," in rows[1]


def test_field_round_trip_and_reingest(tmp_path):
    cfg = load_config("C.cfg")
    field, _ = solve(cfg.problem.with_h(0.1))
    path = tmp_path / "field.csv"
    path.write_text(write_field_csv(field))
    back = read_field_csv(path, cfg.problem.with_h(0.1))
    assert np.array_equal(back.values, field.values)
    with pytest.raises(ValueError):
        read_field_csv(path, cfg.problem)
    run = write(tmp_path, f"[problem]\nk_plus = 1\ng = x1 - 0.1\nh = 0.1\n[analysis]\nfield = field.csv\n")
    assert main(["freeboundary", "--config", str(run), "--out", str(tmp_path / "fb")]) == 0


def test_verify_single_config_and_failure_exit(tmp_path):
    ok = write(tmp_path, "[problem]\ng = x1\nh = 0.025\n[analysis]\ncenters = 0\n"
               "[suite]\nkinds = MAX_PRINCIPLE, N_LE_NTILDE\nrefine = false\n", "lin.cfg")
    assert main(["verify", "--config", str(ok), "--out", str(tmp_path / "v")]) == 0
    rows = (tmp_path / "v" / "audit_report.csv").read_text().splitlines()
    assert [r.split(",")[:3] for r in rows[1:]] == [["lin", "MAX_PRINCIPLE", "1"], ["lin", "N_LE_NTILDE", "1"]]
    # a vanishing solution has no nondegeneracy constant
    flat = write(tmp_path, "[problem]\ng = 0\nh = 0.025\n[analysis]\ncenters = 0\n"
                 "[suite]\nkinds = NONDEGENERACY\nrefine = false\n", "flat.cfg")
    assert main(["verify", "--config", str(flat), "--out", str(tmp_path / "w")]) == 1
    assert ",NONDEGENERACY,0," in (tmp_path / "w" / "audit_report.csv").read_text()


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "thinpen.cli", "solve", "--config", "A.cfg", "--h", "0.25",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
