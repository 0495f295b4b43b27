"""
Stationary measure from the balance equations
=============================================

Solve for the origin mass, then the full profile on a box, and check it
against the geometric closed form available in one dimension.
"""

import math

import numpy as np

from catbrw import walk
from catbrw.lattice import BoxIndex
from catbrw.params import ModelParams

p = ModelParams(d=1, lam=0.2, lambda0=2.0)
root = walk.solve_nu0(p)
print(f"u* = {root.u_star:.10f}, nu0 = {root.nu0:.10f}")

# in d = 1, u* solves u(u+2) = eps^2 and the profile is geometric
eps = p.epsilon
print("closed form u*:", math.sqrt(1 + eps ** 2) - 1)

sol = walk.nu_profile(p, root.u_star, BoxIndex(60, 1))
r = (1 + root.u_star) - math.sqrt((1 + root.u_star) ** 2 - 1)
x = np.arange(-60, 61)
print("max deviation from nu0 r^|x|:", np.abs(sol.values - root.nu0 * r ** np.abs(x)).max())
print("residuals:", sol.residuals, sol.origin_residual)
# the defect sits at the root tolerance; the budget covers only truncation
print("mass defect", sol.mass_defect, "truncation budget", sol.mass_budget)

# %%
# above gamma_3 in three dimensions the measure exists and is tightly localised
p3 = ModelParams(d=3, lam=0.5, lambda0=9.0)
sol3 = walk.stationary_measure(p3)
print(f"d=3 nu0 = {sol3.nu0:.6f} on a box of radius {sol3.box.radius}")
for site in [(0, 0, 0), (1, 0, 0), (1, 1, 0), (2, 0, 0)]:
    print(site, f"{sol3.nu[site]:.3e}")

# below gamma_3 there is none
try:
    walk.solve_nu0(ModelParams(d=3, lam=0.1, lambda0=0.6))
except walk.NoStationaryMeasure as exc:
    print("no measure:", exc)
