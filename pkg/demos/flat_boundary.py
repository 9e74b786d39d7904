"""Walk through the half-space: hypotheses, a Harnack chain and the boundary ratio ladder.

Run with ``python3 demos/flat_boundary.py``; takes a few seconds.
"""

import numpy as np

from harnacklab import domains
from harnacklab.bhi import bhi_report
from harnacklab.chains import escape_chain
from harnacklab.grid import distance_transform, mask_from_state
from harnacklab.harmonic import solve_harmonic
from harnacklab.hypotheses import full_report

n = 129
phi = domains.builtin("halfspace", 2, n)
g = phi.grid
print(f"grid {n}x{n}, h = {g.h:.4f}")

rep = full_report(phi)
print("\nhypothesis estimates for max(x_2, 0):")
for key in ("L_hat", "kappa_hat", "mu_hat", "Lambda_hat", "eta_hat", "subharmonic_defect"):
    print(f"  {key:20s} {getattr(rep, key):.4f}")
print(f"  every verdict passes: {rep.all_pass}")

# a chain starting in the layer delta/2 < phi <= delta climbs above delta
mask = mask_from_state(phi)
dist = distance_transform(mask)
x0 = g.node([0.0, 0.06])
chain = escape_chain(phi, dist, x0, delta=0.1)
print(f"\nchain from phi = {phi[x0]:.3f}: {chain.N} step(s), ends at level {chain.terminal_level:.3f}")

# two harmonic functions vanishing on the flat part of the boundary
u = solve_harmonic(mask, lambda *x: np.maximum(x[-1], 0.0))
v = solve_harmonic(mask, lambda *x: np.maximum(x[-1], 0.0) * (1 + 0.5 * x[0]))
report = bhi_report(u, v, g.node([0.0, 0.5]), rho=0.25, r0=0.5)
print(f"\ncomparability constant on B_1/4: M = {report.M:.4f}")
print("oscillation of u/v on shrinking balls at the origin:")
for lv in report.levels:
    print(f"  r = {lv.r:.4f}  osc = {lv.osc:.5f}  decay = {lv.decay_factor:.3f}")
print(f"fitted Holder exponent of u/v: {report.alpha:.3f}")
