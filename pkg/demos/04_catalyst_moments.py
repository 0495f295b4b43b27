"""
First moments and the catalyst-only process
===========================================

The mean occupation solves a linear lattice equation. Branching away from
the origin only rescales it by e^{lam t}, and below the escape
probability the catalyst-only process has a finite mean total progeny.
"""

import math

from catbrw import walk
from catbrw.catalyst import (catalyst_params, catalyst_total_progeny, heat_kernel_origin,
                             moment_identity, moment_trajectory)
from catbrw.lattice import BoxIndex
from catbrw.params import ModelParams

# with no branching the solver reproduces the Bessel heat kernel
box = BoxIndex(16, 1)
for f in moment_trajectory(ModelParams(1, 0.0, 0.0), box, [1.0, 3.0], dt=1e-2):
    print(f"t={f.t}: u(0) = {f.at((0,)):.12f}, Bessel {float(heat_kernel_origin(1, f.t)):.12f}")

# %%
# u_(lam, lambda0) = e^{lam t} u_(0, eps)
p = ModelParams(1, 0.2, 2.0)
check = moment_identity(p, BoxIndex(22, 1), [1.0, 3.0, 5.0], [(0,), (1,)], dt=1e-3)
print("largest relative error:", check.max_rel_error)
for site, t, full, scaled, _ in check.rows[:4]:
    print(site, t, f"{full:.8g}", f"{scaled:.8g}")

# %%
# subcritical catalyst in d = 3: each particle founds eps/gamma_3 offspring on average
g3 = walk.gamma(3).estimate
est = catalyst_total_progeny(3, 0.33, 20_000, seed=1, gamma_hat=g3)
print(f"mean total progeny {est.mean:.4f} +- {est.se:.4f}, predicted {est.predicted:.4f}")

f = moment_trajectory(catalyst_params(3, 0.33), BoxIndex(16, 3), [10.0], dt=1e-2)[0]
print(f"E[N_10] = {f.total:.4f} (finite limit {est.predicted:.4f}), "
      f"e^(eps t) would be {math.exp(3.3):.1f}")
