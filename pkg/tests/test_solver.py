import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thinpen import Field, ProblemConfig, build_grid
from thinpen.solver import (
    SolveOptions,
    SolverError,
    discrete_energy,
    energy_gradient,
    harmonic_lift,
    solve,
)

from conftest import solved


def exact_b(pts):
    return np.exp(0.5 * pts[:, 1]) * np.cos(0.5 * pts[:, 0])


def cfg(**kw):
    base = dict(n=2, p=2.0, k_plus=1.0, k_minus=0.0, L=1.0, h=0.1, g_expr="x1 - 0.1")
    base.update(kw)
    return ProblemConfig(**base)


def test_zero_field_zero_energy():
    c = cfg(g_expr="0")
    g = build_grid(c)
    z = Field(g, np.zeros(g.size))
    assert discrete_energy(z, c) == 0.0
    assert np.all(energy_gradient(z, c).values == 0.0)


def test_constant_field_energy():
    c = cfg(k_plus=1, k_minus=0, g_expr="1", h=0.05)
    g = build_grid(c)
    assert discrete_energy(Field(g, np.ones(g.size)), c) == pytest.approx(1.0, rel=1e-14)


def test_linear_field_energy_converges():
    errs = []
    for h in (0.1, 0.05, 0.025):
        c = cfg(k_plus=1, k_minus=1, g_expr="x1", h=h)
        g = build_grid(c)
        errs.append(abs(discrete_energy(Field.from_function(g, lambda x: x[:, 0]), c) - 4 / 3))
    assert errs[-1] < 1e-3
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def _fd_check(c, seed, scale="directional"):
    """Worst relative error of central differences against <grad, w>.

    ``scale="gradient"`` divides by |grad| |w| instead of |<grad, w>|, which
    keeps near-orthogonal random directions from measuring roundoff only.
    """
    g = build_grid(c)
    rng = np.random.default_rng(seed)
    v = rng.normal(size=g.size)
    v[g.dirichlet] = c.g(g.points[g.dirichlet])
    field = Field(g, v)
    grad = energy_gradient(field, c).values
    eps = 1e-6 * np.linalg.norm(v)
    worst = 0.0
    for _ in range(10):
        w = rng.normal(size=g.size)
        w[g.dirichlet] = 0.0
        w /= np.linalg.norm(w)
        jp = discrete_energy(Field(g, v + eps * w), c)
        jm = discrete_energy(Field(g, v - eps * w), c)
        fd = (jp - jm) / (2 * eps)
        exact = float(grad @ w)
        denom = abs(exact) if scale == "directional" else np.linalg.norm(grad)
        worst = max(worst, abs(fd - exact) / denom)
    return worst


@pytest.mark.parametrize("p", [2.0, 2.5, 3.0])
def test_gradient_matches_finite_differences(p):
    c = cfg(p=p, k_plus=0.7, k_minus=1.3, h=0.1)
    assert _fd_check(c, seed=int(10 * p)) <= 1e-6


@settings(max_examples=15, deadline=None)
@given(st.sampled_from([2.0, 2.5, 3.0]), st.floats(0, 3), st.floats(0, 3), st.integers(0, 2**31))
def test_gradient_fd_random_configs(p, kp, km, seed):
    c = cfg(p=p, k_plus=kp, k_minus=km, h=0.2, g_expr="x1*xn + 0.3")
    assert _fd_check(c, seed, scale="gradient") <= 1e-6


def test_gradient_vanishes_on_dirichlet_nodes():
    c = cfg(h=0.1)
    g = build_grid(c)
    u = Field(g, np.random.default_rng(1).normal(size=g.size))
    assert np.all(energy_gradient(u, c).values[g.dirichlet] == 0.0)


def test_neumann_linear_data_is_exact():
    c = cfg(k_plus=0, k_minus=0, g_expr="x1", h=0.05)
    u, rep = solve(c)
    assert rep.converged
    np.testing.assert_allclose(u.values, u.grid.points[:, 0], atol=1e-12)


def test_manufactured_second_order():
    errs = []
    for h in (0.1, 0.05):
        c = cfg(k_plus=0.5, k_minus=0.5, g_expr="exp(0.5*xn)*cos(0.5*x1)", h=h)
        u, rep = solve(c)
        assert rep.converged
        errs.append(np.max(np.abs(u.values - exact_b(u.grid.points))))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.25)


@pytest.mark.parametrize("kp,km", [(0, 0), (1, 0), (0, 1), (2, 3)])
def test_positive_data_positive_solution(kp, km):
    c = cfg(k_plus=kp, k_minus=km, g_expr="2 + x1", h=0.05)
    u, rep = solve(c)
    assert rep.converged
    assert u.values.min() >= -SolveOptions().grad_tol


@pytest.mark.parametrize("name", ["C", "D"])
def test_initial_guess_independence(name):
    s = solved(name)
    u0, r0 = solve(s.config, SolveOptions(initial_guess="zero_interior"))
    assert r0.converged
    assert np.max(np.abs(u0.values - s.field.values)) <= 1e-8


def test_user_initial_field():
    s = solved("C")
    u, rep = solve(s.config, SolveOptions(initial_guess="user_field", initial=s.field))
    assert rep.converged and rep.iterations == 0
    assert np.array_equal(u.values, s.field.values)


def test_energy_decreases_every_iteration():
    c = cfg(p=3.0, k_plus=2.0, k_minus=0.5, g_expr="x1^3 - 0.2", h=0.05)
    u, rep = solve(c, SolveOptions(initial_guess="zero_interior"))
    assert rep.converged
    assert rep.iterations >= 2
    assert np.all(np.diff(rep.energy_history) < 0)
    assert all(d < 0 for d in rep.decrease_history)


@pytest.mark.parametrize("name", ["A", "B", "C", "D"])
def test_max_principle_and_residual(name):
    s = solved(name)
    assert s.report.converged
    assert s.report.grad_norm <= 1e-10
    assert np.max(np.abs(s.field.values)) <= s.field.dirichlet_sup() + 1e-8
    res = energy_gradient(s.field, s.config).values[s.field.grid.free]
    assert np.max(np.abs(res)) <= 1e-10


def test_forced_non_convergence():
    u, rep = solve(cfg(h=0.02), SolveOptions(max_iters=1))
    assert not rep.converged and rep.iterations == 1


def test_newton_rejects_low_exponent():
    with pytest.raises(SolverError):
        solve(cfg(p=1.5))


def test_descent_low_exponent():
    c = cfg(p=1.5, k_plus=1, k_minus=1, g_expr="x1 + 0.5", h=0.1)
    u, rep = solve(c, SolveOptions(method="descent", max_iters=2000, grad_tol=1e-8))
    assert rep.converged
    assert np.all(np.diff(rep.energy_history) <= 0)


def test_descent_agrees_with_newton():
    c = cfg(p=2.5, k_plus=1, k_minus=2, g_expr="x1 - 0.2", h=0.1)
    un, _ = solve(c)
    ud, rep = solve(c, SolveOptions(method="descent", max_iters=5000, grad_tol=1e-11))
    assert rep.converged
    assert np.max(np.abs(un.values - ud.values)) <= 1e-8


@pytest.mark.parametrize("kw", [dict(method="cg"), dict(max_iters=0), dict(grad_tol=0.0),
                                dict(contraction=1.0), dict(initial_guess="user_field")])
def test_options_validation(kw):
    with pytest.raises(SolverError):
        SolveOptions(**kw)


def test_harmonic_lift_matches_neumann_solve():
    c = cfg(k_plus=0, k_minus=0, g_expr="x1^2 - xn^2 + xn", h=0.1)
    u, _ = solve(c)
    np.testing.assert_allclose(harmonic_lift(u.grid, c), u.values, atol=1e-12)


def test_repeat_solves_bit_identical():
    c = cfg(h=0.05)
    a, _ = solve(c)
    b, _ = solve(c)
    assert a.values.tobytes() == b.values.tobytes()
