"""
The measure-valued Polya urn
============================

Seen at its event times, the particle system is an urn whose colours are
lattice sites. The audit evaluates the constants that certify the urn
argument at a parameter point.
"""

import numpy as np

from catbrw.mvpp import constants_audit, mvpp_run, q_total
from catbrw.params import ModelParams

p = ModelParams(d=1, lam=0.2, lambda0=2.0)
print("Q_x(Z) at x = 0, 1, 3:", [round(q_total((x,), p), 6) for x in (0, 1, 3)])

runs = [mvpp_run(p, 10_000, seed=5, replica=r, record=(1000, 5000, 10_000)) for r in range(20)]
frac = np.array([r.origin_fraction for r in runs])
qbar = np.array([r.q_running_mean for r in runs])
print("origin fraction (mean over urns) at n=1e3, 5e3, 1e4:", np.round(frac.mean(axis=0), 4))
print("running mean of Q totals, worst urn:", np.round(qbar.min(axis=0), 4))

# %%
rep = constants_audit(p)
print(f"kappa={rep.kappa:g}  c={rep.c:.6f}  rho1={rep.rho1:g}  rho2={rep.rho2:g}")
print("checks:", rep.checks)

# just below lambda0 = 2d - 1 + 2d lam the decay inequality flips
low = constants_audit(ModelParams(1, 0.2, 1.3))
print("lambda0 = 1.3:", low.checks)
