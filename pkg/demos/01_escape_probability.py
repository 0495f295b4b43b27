"""
Escape probability of the simple random walk
============================================

The law of the first return time to the origin, built from return
probabilities by deconvolution, and the escape probability it implies.
"""

import numpy as np

from catbrw import walk

# first return law in d = 1: f_2 = 1/2, f_4 = 1/8, odd times never
pmf1 = walk.return_time_pmf(1, 1000)
print("d=1 f_1..f_8:", np.round(pmf1.pmf[1:9], 6))
print("d=1 mass returned by K=1000:", pmf1.partial_sum)

# d <= 2 is recurrent, so gamma = 0 up to the unreturned mass
for d in (1, 2):
    g = walk.gamma(d)
    print(f"gamma_{d} = {g.estimate} (unreturned mass {g.error_bound:.3g})")

# d = 3 is transient; the tail past K is estimated from the local CLT
g3 = walk.gamma(3)
print(f"gamma_3 = {g3.estimate:.7f} +- {g3.error_bound:.1e}")

# %%
# f increases from gamma_d at 0+; its two series forms agree to the bound
pmf3 = walk.return_time_pmf(3)
for u in (1e-4, 0.01, 0.1, 1.0, 5.0):
    r = walk.f_eval_bounded(u, pmf3)
    print(f"f({u:g}) = {r.value:.10f}  series form {r.series_value:.10f}  "
          f"bound {max(r.error_bound, r.series_error_bound):.1e}")
