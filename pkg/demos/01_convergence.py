"""
Grid convergence on a manufactured solution
===========================================

With k_plus = k_minus = 1/2 and p = 2 the flux law on x_n = 0 is linear,
and u = exp(xn/2) cos(x1/2) is harmonic with du/dxn = u/2 there. So it
solves the problem exactly and we can watch the error shrink with h.
"""

import numpy as np

from thinpen.instances import CANONICAL, solve_instance

print(f"{'h':>7} {'iters':>5} {'max error':>11} {'ratio':>7}")
prev = None
for h in (0.1, 0.05, 0.025, 0.0125):
    s = solve_instance(CANONICAL["B"], h=h)
    x = s.field.grid.points
    err = np.max(np.abs(s.field.values - np.exp(0.5 * x[:, 1]) * np.cos(0.5 * x[:, 0])))
    ratio = "" if prev is None else f"{prev / err:7.3f}"
    print(f"{h:7.4f} {s.report.iterations:5d} {err:11.3e} {ratio}")
    prev = err

# A ratio near 4 per halving is second order. Newton needs one step because
# the trace never changes sign, so the penalty is a plain quadratic.
