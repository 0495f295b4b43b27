"""Independent reference computations used to freeze expected values.

Nothing here imports the code paths it checks.
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy.special import gammaln, zeta


def site_distribution_dp(d: int, n_max: int) -> np.ndarray:
    """p_n(0,0) for n <= n_max by propagating the full site distribution of
    the discrete-time walk on a box of radius n_max."""
    side = 2 * n_max + 3
    dist = np.zeros((side,) * d)
    c = (n_max + 1,) * d
    dist[c] = 1.0
    out = [1.0]
    for _ in range(n_max):
        new = np.zeros_like(dist)
        for ax in range(d):
            new += np.roll(dist, 1, axis=ax) + np.roll(dist, -1, axis=ax)
        dist = new / (2 * d)
        out.append(dist[c])
    return np.array(out)


def first_return_enumeration(d: int, n_max: int) -> list[Fraction]:
    """Exact P(tau_0 = n) for n <= n_max by enumerating every path."""
    steps = []
    for i in range(d):
        for s in (1, -1):
            e = [0] * d
            e[i] = s
            steps.append(tuple(e))
    counts = [0] * (n_max + 1)
    # depth-first over paths that have not yet returned
    stack = [((0,) * d, 0)]
    while stack:
        pos, n = stack.pop()
        if n == n_max:
            continue
        for e in steps:
            y = tuple(a + b for a, b in zip(pos, e))
            if not any(y):
                counts[n + 1] += (2 * d) ** (n_max - n - 1)
            else:
                stack.append((y, n + 1))
    total = (2 * d) ** n_max
    return [Fraction(cnt, total) for cnt in counts]


def cubic_closed_walk_probabilities(n_half: int) -> np.ndarray:
    """p_{2n}(0,0) on Z^3 for n = 0..n_half from the closed-walk count
    a(n) = C(2n,n) sum_k C(n,k)^2 C(2k,k), divided by 6^{2n}."""
    out = np.empty(n_half + 1)
    for n in range(n_half + 1):
        k = np.arange(n + 1)
        log_terms = (2 * (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))
                     + gammaln(2 * k + 1) - 2 * gammaln(k + 1))
        log_c2n = gammaln(2 * n + 1) - 2 * gammaln(n + 1)
        m = log_terms.max()
        out[n] = math.exp(log_c2n + m - 2 * n * math.log(6.0)) * np.exp(log_terms - m).sum()
    return out


def gamma3_green_series(n_half: int = 6000) -> float:
    """gamma_3 = 1 / sum_n p_n(0,0), with the sum past the horizon replaced
    by the local-CLT asymptote rescaled to match the last computed term."""
    p = cubic_closed_walk_probabilities(n_half)
    # p_{2n} ~ 2 (3 / (4 pi n))^{3/2}
    amp = 2.0 * (3.0 / (4.0 * math.pi)) ** 1.5
    scale = p[-1] / (amp * n_half ** -1.5)
    tail = scale * amp * zeta(1.5, n_half + 1)
    return 1.0 / (p.sum() + tail)


def one_dim_first_return(n: int) -> float:
    """P(tau_0 = n) for the 1-d walk: C(2m,m) / ((2m-1) 4^m) at n = 2m."""
    if n % 2 or n == 0:
        return 0.0
    m = n // 2
    return math.exp(gammaln(2 * m + 1) - 2 * gammaln(m + 1) - m * math.log(4.0)) / (2 * m - 1)


def one_dim_f(u):
    """Closed form of f(u) for d = 1."""
    return np.sqrt(u * (u + 2.0))


def one_dim_nu(eps: float, x):
    """Geometric stationary profile on Z for catalyst excess ``eps``."""
    u = math.sqrt(1.0 + eps * eps) - 1.0
    r = (1.0 + u) - math.sqrt((1.0 + u) ** 2 - 1.0)
    nu0 = u / eps
    return nu0 * r ** np.abs(np.asarray(x))


def continuous_heat_kernel_origin(d: int, t: float) -> float:
    """P(X(t) = 0) for the rate-1 continuous-time walk on Z^d."""
    from scipy.special import ive

    return float(ive(0, t / d) ** d)


if __name__ == "__main__":
    for n_half in (2000, 4000, 8000):
        print(n_half, repr(gamma3_green_series(n_half)))
    print([str(f) for f in first_return_enumeration(1, 8)])
    print([str(f) for f in first_return_enumeration(3, 6)])
