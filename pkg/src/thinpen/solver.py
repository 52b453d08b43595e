"""Discrete energy, its exact gradient, and its minimisation.

The scheme is discretise-then-optimise: the discrete energy is

    J(u) = 1/2 * [ sum_edges w_e ((u_i - u_j)/h)^2 h^n
                   + sum_{x_n = 0} w_b (kt_minus (u^-)^p + kt_plus (u^+)^p) ]

with edge weights halved for every box face an edge lies on, trapezoid
weights ``w_b`` along the bottom face and ``kt = 2k/p``. Its gradient is the
nodal weak residual, and the nonlinear flux condition on x_n = 0 comes out of
the variational structure without ghost nodes.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .core import Field, HalfGrid, ProblemConfig, build_grid

__all__ = [
    "SolverError",
    "SolveOptions",
    "SolveReport",
    "stiffness",
    "discrete_energy",
    "energy_gradient",
    "harmonic_lift",
    "solve",
]

log = logging.getLogger(__name__)

METHODS = ("newton", "descent")
INITIAL_GUESSES = ("zero_interior", "dirichlet_harmonic_lift", "user_field")


class SolverError(ValueError):
    pass


@dataclass(frozen=True)
class SolveOptions:
    method: str = "newton"
    max_iters: int = 200
    grad_tol: float = 1e-10
    contraction: float = 0.5
    sufficient_decrease: float = 1e-4
    initial_guess: str = "dirichlet_harmonic_lift"
    initial: Field | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise SolverError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.max_iters < 1:
            raise SolverError("max_iters must be >= 1")
        if not self.grad_tol > 0:
            raise SolverError("grad_tol must be > 0")
        if not 0 < self.contraction < 1 or not 0 < self.sufficient_decrease < 1:
            raise SolverError("line-search constants must lie in (0, 1)")
        if self.initial_guess not in INITIAL_GUESSES:
            raise SolverError(f"initial_guess must be one of {INITIAL_GUESSES}")
        if self.initial_guess == "user_field" and self.initial is None:
            raise SolverError("initial_guess='user_field' needs `initial`")


@dataclass
class SolveReport:
    iterations: int
    energy: float
    grad_norm: float
    converged: bool
    wall_time: float
    method: str = "newton"
    energy_history: list = field(default_factory=list)
    decrease_history: list = field(default_factory=list)


def _edge_weight(lat: np.ndarray, shape: tuple, d: int) -> np.ndarray:
    w = np.ones(len(lat))
    for j in range(len(shape)):
        if j == d:
            continue
        w[(lat[:, j] == 0) | (lat[:, j] == shape[j] - 1)] *= 0.5
    return w


@lru_cache(maxsize=16)
def _stiffness_cached(n: int, L: float, h: float) -> sp.csr_matrix:
    grid = build_grid(ProblemConfig(n=n, L=L, h=h))
    shape = grid.shape
    idx = np.arange(grid.size).reshape(shape)
    rows, cols, vals = [], [], []
    for d in range(n):
        lo = [slice(None)] * n
        hi = [slice(None)] * n
        lo[d] = slice(0, -1)
        hi[d] = slice(1, None)
        a = idx[tuple(lo)].ravel()
        b = idx[tuple(hi)].ravel()
        w = _edge_weight(grid.lattice_index(a), shape, d) * h ** (n - 2)
        rows += [a, b, a, b]
        cols += [a, b, b, a]
        vals += [w, w, -w, -w]
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.size, grid.size),
    ).tocsr()
    A.sum_duplicates()
    return A


def stiffness(grid: HalfGrid) -> sp.csr_matrix:
    """Matrix of the quadratic (Dirichlet) part: ``1/2 u^T A u``."""
    return _stiffness_cached(grid.n, grid.L, grid.h)


def _check(field: Field, config: ProblemConfig):
    g = field.grid
    if g.n != config.n or g.h != config.h or g.L != config.L:
        raise SolverError("field grid does not match config")


def _penalty(u: np.ndarray, config: ProblemConfig) -> np.ndarray:
    return 0.5 * (
        config.kt_minus * np.maximum(-u, 0.0) ** config.p
        + config.kt_plus * np.maximum(u, 0.0) ** config.p
    )


def _penalty_grad(u: np.ndarray, config: ProblemConfig) -> np.ndarray:
    q = config.p - 1.0
    return config.k_plus * np.maximum(u, 0.0) ** q - config.k_minus * np.maximum(-u, 0.0) ** q


def _penalty_hess(u: np.ndarray, config: ProblemConfig) -> np.ndarray:
    p = config.p
    if p == 2.0:
        out = np.where(u > 0, config.k_plus, config.k_minus)
        return np.where(u == 0, max(config.k_plus, config.k_minus), out).astype(float)
    with np.errstate(divide="ignore"):
        pos = config.k_plus * (p - 1) * np.maximum(u, 0.0) ** (p - 2)
        neg = config.k_minus * (p - 1) * np.maximum(-u, 0.0) ** (p - 2)
    out = np.where(u > 0, pos, np.where(u < 0, neg, 0.0))
    if p < 2:
        out = np.where(np.isfinite(out), out, 0.0)
    return out


def _penalty_delta(u: np.ndarray, s: np.ndarray, config: ProblemConfig) -> np.ndarray:
    """Per-node penalty(u + s) - penalty(u) without catastrophic cancellation."""
    v = u + s
    same = (np.sign(u) == np.sign(v)) & (u != 0)
    out = _penalty(v, config) - _penalty(u, config)
    if np.any(same):
        us, ss = u[same], s[same]
        k = np.where(us > 0, config.kt_plus, config.kt_minus)
        out[same] = 0.5 * k * np.abs(us) ** config.p * np.expm1(config.p * np.log1p(ss / us))
    return out


def discrete_energy(field: Field, config: ProblemConfig) -> float:
    """Value of the discrete energy at ``field`` (Dirichlet values included)."""
    _check(field, config)
    u = field.values
    grid = field.grid
    A = stiffness(grid)
    quad = 0.5 * float(u @ (A @ u))
    ub = u[grid.bottom]
    return quad + float(np.sum(grid.bottom_weights * _penalty(ub, config)))


def _full_gradient(u: np.ndarray, grid: HalfGrid, config: ProblemConfig) -> np.ndarray:
    g = stiffness(grid) @ u
    g[grid.bottom] += grid.bottom_weights * _penalty_grad(u[grid.bottom], config)
    return g


def energy_gradient(field: Field, config: ProblemConfig) -> Field:
    """Exact gradient of :func:`discrete_energy` in the free nodal values.

    Components at DIRICHLET nodes are zero.
    """
    _check(field, config)
    grid = field.grid
    g = _full_gradient(field.values, grid, config)
    g[grid.dirichlet] = 0.0
    return Field(grid, g)


def _dirichlet_values(grid: HalfGrid, config: ProblemConfig) -> np.ndarray:
    return config.g(grid.points[grid.dirichlet])


def harmonic_lift(grid: HalfGrid, config: ProblemConfig) -> np.ndarray:
    """Nodal values of the k = 0 (pure Neumann on x_n = 0) solution."""
    A = stiffness(grid)
    free, dir_ = grid.free, grid.dirichlet
    u = np.zeros(grid.size)
    u[dir_] = _dirichlet_values(grid, config)
    rhs = -(A[free][:, dir_] @ u[dir_])
    u[free] = splu(A[free][:, free].tocsc()).solve(rhs)
    return u


def _initial(grid: HalfGrid, config: ProblemConfig, opts: SolveOptions) -> np.ndarray:
    if opts.initial_guess == "user_field":
        if opts.initial.grid.size != grid.size:
            raise SolverError("initial field lives on a different grid")
        u = opts.initial.values.copy()
        u[grid.dirichlet] = _dirichlet_values(grid, config)
        return u
    if opts.initial_guess == "zero_interior":
        u = np.zeros(grid.size)
        u[grid.dirichlet] = _dirichlet_values(grid, config)
        return u
    return harmonic_lift(grid, config)


def _energy_change(u, step, grid, config, A) -> float:
    Au = A @ u
    quad = float(step @ Au) + 0.5 * float(step @ (A @ step))
    b = grid.bottom
    pen = float(np.sum(grid.bottom_weights * _penalty_delta(u[b], step[b], config)))
    return quad + pen


def solve(config: ProblemConfig, opts: SolveOptions | None = None) -> tuple[Field, SolveReport]:
    """Minimise the discrete energy subject to the Dirichlet data.

    ``newton`` is a semismooth Newton method with Armijo backtracking
    (requires p >= 2). ``descent`` is gradient descent preconditioned by the
    inverse of the free-node stiffness block.
    """
    opts = opts or SolveOptions()
    if config.p < 2 and opts.method == "newton":
        raise SolverError(f"p={config.p} < 2 requires method='descent'")
    t0 = time.perf_counter()
    grid = build_grid(config)
    A = stiffness(grid)
    free = grid.free
    A_ff = A[free][:, free].tocsc()
    pre = splu(A_ff) if opts.method == "descent" else None
    # map bottom nodes into free-block positions for the Hessian diagonal
    pos_in_free = -np.ones(grid.size, dtype=int)
    pos_in_free[free] = np.arange(len(free))
    b_free = pos_in_free[grid.bottom]
    keep = b_free >= 0

    u = _initial(grid, config, opts)
    energies = [discrete_energy(Field(grid, u), config)]
    decreases = []
    g = _full_gradient(u, grid, config)[free]
    gnorm = float(np.max(np.abs(g))) if len(g) else 0.0
    it = 0
    while gnorm > opts.grad_tol and it < opts.max_iters:
        if opts.method == "newton":
            diag = np.zeros(len(free))
            hb = grid.bottom_weights * _penalty_hess(u[grid.bottom], config)
            diag[b_free[keep]] = hb[keep]
            H = (A_ff + sp.diags(diag)).tocsc()
            d = -splu(H).solve(g)
        else:
            d = -pre.solve(g)
        slope = float(g @ d)
        if slope >= 0:
            log.warning("non-descent direction at iteration %d", it)
            break
        t = 1.0
        step = np.zeros(grid.size)
        while True:
            step[free] = t * d
            dJ = _energy_change(u, step, grid, config, A)
            if dJ <= opts.sufficient_decrease * t * slope:
                break
            t *= opts.contraction
            if t < 1e-14:
                break
        if t < 1e-14:
            log.warning("line search stalled at iteration %d (|g|=%.3e)", it, gnorm)
            break
        u = u + step
        it += 1
        decreases.append(dJ)
        energies.append(discrete_energy(Field(grid, u), config))
        g = _full_gradient(u, grid, config)[free]
        gnorm = float(np.max(np.abs(g)))
        log.debug("iter %d: t=%.3g dJ=%.3e |g|=%.3e", it, t, dJ, gnorm)

    report = SolveReport(
        iterations=it,
        energy=energies[-1],
        grad_norm=gnorm,
        converged=gnorm <= opts.grad_tol,
        wall_time=time.perf_counter() - t0,
        method=opts.method,
        energy_history=energies,
        decrease_history=decreases,
    )
    return Field(grid, u), report
