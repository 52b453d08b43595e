"""
Second differences at a regular point
=====================================

With k_minus = 0 the flux law switches from du/dxn = u to du/dxn = 0 where
the trace changes sign. The trace stays C^1 across the switch, but its
second difference quotient keeps growing as the offset shrinks, and it
grows a little when the grid is refined at a fixed offset.
"""

import numpy as np

from thinpen.freeboundary import c11_probe, classify, trace_zero_set
from thinpen.instances import CANONICAL, solve_instance

offsets = (0.32, 0.16, 0.08, 0.04, 0.02, 0.01)
for h in (0.04, 0.02, 0.01, 0.005):
    s = solve_instance(CANONICAL["C"], h=h)
    (pt,) = classify(trace_zero_set(s.field, s.config), s.field, s.config)
    usable = [d for d in offsets if d >= 2 * h]
    q = [v for _, v in c11_probe(s.field, s.config, pt.x, usable)]
    row = "  ".join(f"{v:.4f}" for v in q)
    print(f"h={h:<6} x0={pt.x:.5f} slope={pt.grad_norm:.3f}  q: {row}")

# On the finest grid the increments per halving of the offset are nearly
# constant, so q grows like log(1/offset).
print("increments on h=0.005:", np.round(np.diff(q), 3))

# Compare with the smooth instance, where q sits at |d^2/dx^2 cos(x/2)| = 1/4.
b = solve_instance(CANONICAL["B"], h=0.01)
print("smooth instance q:", "  ".join(f"{v:.4f}" for _, v in c11_probe(b.field, b.config, 0.0, offsets[:-1])))
