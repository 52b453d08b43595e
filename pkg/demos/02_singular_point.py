"""
Frequency and blow-up at a singular point
=========================================

Even data x1^2 with a symmetric penalty gives an even solution. Shifting the
data by a constant moves the trace up and down; we pick the shift that makes
the trace vanish at the origin, where it then touches zero tangentially.
"""

import numpy as np

from thinpen.blowup import fit_blowup
from thinpen.freeboundary import classify, trace_zero_set
from thinpen.functionals import frequency_limit, geometric_radii, radial_profile
from thinpen.instances import CANONICAL, solve_instance

s = solve_instance(CANONICAL["D"], h=0.01)
print("data:", s.config.g_expr)

xs, tr = s.field.trace()
near = np.abs(xs) <= 0.1
print("trace near 0 (every other node):")
for x, u in zip(xs[near][::2], tr[near][::2]):
    print(f"  x1={x:+.2f}  u={u:+.3e}")

# Classification: the tangential slope at 0 is below sqrt(h), so the point is
# a singular candidate and gets a frequency.
(pt,) = classify(trace_zero_set(s.field, s.config), s.field, s.config)
print(f"\npoint {pt.x:+.3g}: {pt.classification.value}, slope {pt.grad_norm:.1e}, "
      f"mu_hat {pt.mu_hat:.4f} -> mu {pt.mu}")

# The perturbed frequency is monotone in r and extrapolates to 2.
prof = radial_profile(s.field, s.config, 0.0, geometric_radii(1.0, s.config.h))
for r, n, nt in zip(prof.radii, prof.N, prof.Ntilde):
    print(f"  r={r:.4f}  N={n:.4f}  Ntilde={nt:.4f}")
fit = frequency_limit(prof)
print(f"intercept {fit.mu_hat:.4f}, slope {fit.slope:.4f}")

# Blow-up: u(r x)/r^2 projected onto Re((x1 + i|xn|)^2).
for r in (0.2, 0.1):
    poly, residual = fit_blowup(s.field, s.config, 0.0, 2, r)
    print(f"r_fit={r}: coefficient {poly.coeffs[0]:.5f}, relative residual {residual:.4f}")
