"""
The killed process and its quasi-stationary law
===============================================

A second, independent route to the limit measure: the quasi-stationary
distribution of a killed jump process, pushed through the mean
replacement kernel. It agrees with the balance solution to rounding.
"""

from catbrw import walk
from catbrw.experiments import classify, phase_scan
from catbrw.lattice import total_variation
from catbrw.params import ModelParams
from catbrw.qsd import death_rate_table, solve_qsd

p = ModelParams(d=1, lam=0.2, lambda0=2.0)
print("death rates:", death_rate_table(p))

sol = solve_qsd(p, radius=40)
print(f"decay rate {sol.decay_theta:.6f}, residual {sol.residual:.1e}, "
      f"{sol.iterations} iterations")

bal = walk.stationary_measure(p, radius=40)
print("TV(limit, balance) =", total_variation(sol.limit_measure, bal.nu))
print("limit mass at 0:", sol.limit_measure[(0,)])

# %%
# regime labels over a small grid, without simulation
g3 = walk.gamma(3).estimate
for lam, l0 in [(0.3, 0.6), (0.1, 2.0), (0.1, 6.0)]:
    print((lam, l0), classify(3, lam, l0, g3)["label"])

for row in phase_scan(1, [(0.2, 0.2), (0.2, 1.0), (0.2, 2.0)], simulate=False):
    print(row["lambda0"], row["label"], row["nu0"])
