"""Deterministic quantities of the simple symmetric random walk on Z^d.

The discrete-time walk is used throughout. Its first return time to the
origin has the same law as that of the jump chain of the rate-1
continuous-time walk, so the escape probability ``gamma_d`` and the function
``f`` are the same in both pictures.

Notation: ``p_n = P(S_n = 0)`` and ``f_n = P(tau_0 = n)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import gammaln, logsumexp

from .lattice import BoxIndex, SparseMeasure, padded_neighbour_sum
from .params import ModelParams

MAX_HORIZON = 200_000
DEFAULT_HORIZON_TRANSIENT = 20_000
DEFAULT_HORIZON_RECURRENT = 1_000
ROOT_TOL = 1e-12
ROOT_MAX_ITER = 200
NEAR_CRITICAL = 1e-6
PROFILE_TOL = 1e-12


class NoStationaryMeasure(Exception):
    """Raised when ``lambda0 - lam <= gamma_d``: the balance equations have
    no probability solution."""


class ConvergenceError(RuntimeError):
    pass


class MassBudgetExceeded(RuntimeError):
    """The mass missing from a truncated profile exceeds its tail budget."""


class NearCriticalWarning(UserWarning):
    pass


def default_horizon(d: int) -> int:
    return DEFAULT_HORIZON_TRANSIENT if d >= 3 else DEFAULT_HORIZON_RECURRENT


def _check_horizon(K: int) -> int:
    K = int(K)
    if K < 2:
        raise ValueError("horizon K must be at least 2")
    if K > MAX_HORIZON:
        raise MemoryError(f"horizon {K} exceeds the supported maximum {MAX_HORIZON}")
    return K


def _log_one_dim(K: int) -> np.ndarray:
    """log p_n for the 1-d walk, -inf at odd n."""
    out = np.full(K + 1, -np.inf)
    m = np.arange(0, K + 1, 2)
    out[m] = gammaln(m + 1) - 2 * gammaln(m // 2 + 1) - m * math.log(2.0)
    return out


@lru_cache(maxsize=16)
def _return_probabilities(d: int, K: int) -> np.ndarray:
    q = _log_one_dim(K)
    logp = q.copy()
    even = np.arange(0, K + 1, 2)
    lgam = gammaln(np.arange(K + 1) + 1)
    # add one coordinate at a time: of n steps, m go to the new coordinate
    # with probability 1/j each, the rest to the j-1 old ones
    for j in range(2, d + 1):
        new = np.full(K + 1, -np.inf)
        a, b = -math.log(j), math.log((j - 1) / j)
        for n in even:
            m = even[: n // 2 + 1]
            terms = lgam[n] - lgam[m] - lgam[n - m] + m * a + (n - m) * b + q[m] + logp[n - m]
            new[n] = logsumexp(terms)
        logp = new
    p = np.exp(logp)
    p.flags.writeable = False
    return p


def return_probabilities(d: int, K: int) -> np.ndarray:
    """``p_n = P(S_n = 0)`` for ``n = 0..K``.

    Each step of the d-dimensional walk moves a uniformly chosen coordinate,
    so ``p`` follows from the 1-d law by binomial thinning, one coordinate at
    a time, in O(d K^2) operations.
    """
    if not 1 <= d <= 6:
        raise ValueError("d must be in 1..6")
    return _return_probabilities(int(d), _check_horizon(K))


def _lclt_amplitude(d: int) -> float:
    # p_n ~ 2 (d / (2 pi n))^{d/2} for even n
    return 2.0 * (d / (2.0 * math.pi)) ** (d / 2.0)


def return_tail(d: int, p: np.ndarray, s: float = 0.0) -> float:
    """Estimate of ``sum_{n>K} p_n exp(-s n)`` for ``d >= 3``.

    Uses the local limit asymptote rescaled so that it matches the last
    computed term ``p_K``.
    """
    K = len(p) - 1
    K_even = K - (K % 2)
    a = d / 2.0
    amp = _lclt_amplitude(d)
    scale = p[K_even] / (amp * K_even ** (-a))
    if s == 0.0:
        integral = K ** (1.0 - a) / (a - 1.0)
    else:
        integral, _ = integrate.quad(lambda x: x ** (-a) * math.exp(-s * (x - K)), K, np.inf)
        integral *= math.exp(-s * K)
    # even n only: density of terms is 1/2 per unit length
    return 0.5 * scale * amp * integral


@dataclass(frozen=True)
class ReturnTimePmf:
    """Law of the first return time of the discrete-time walk.

    ``pmf[k] = P(tau_0 = k)`` for ``k = 0..horizon`` (``pmf[0] = 0``), and
    ``cumulative[k]`` its partial sums. ``tail_bound`` bounds
    ``sum_{k > horizon} f_k`` and ``tail_estimate`` is the best estimate.
    """

    dim: int
    horizon: int
    pmf: np.ndarray = field(repr=False)
    cumulative: np.ndarray = field(repr=False)
    return_probs: np.ndarray = field(repr=False)
    tail_bound: float
    tail_estimate: float
    return_tail: float  # estimate of sum_{n>K} p_n, 0 for d <= 2

    @property
    def partial_sum(self) -> float:
        return float(self.cumulative[-1])

    def survival(self) -> np.ndarray:
        """``P(tau_0 >= k + 1)`` for ``k = 0..horizon`` (escape included)."""
        return 1.0 - self.cumulative


def _first_returns(p: np.ndarray) -> np.ndarray:
    """Deconvolve ``p = delta_0 + f * p`` on even indices."""
    P = p[::2]
    n = len(P)
    F = np.zeros(n)
    for j in range(1, n):
        F[j] = P[j] - np.dot(F[1:j], P[j - 1:0:-1])
    f = np.zeros(len(p))
    f[::2] = np.clip(F, 0.0, None)
    return f


@lru_cache(maxsize=16)
def _pmf_cached(d: int, K: int) -> ReturnTimePmf:
    p = return_probabilities(d, K)
    f = _first_returns(p)
    f.flags.writeable = False
    cum = np.cumsum(f)
    cum.flags.writeable = False
    S = float(cum[-1])
    if d >= 3:
        Tp = return_tail(d, p)
        g = _solve_gamma(S, Tp)
        tail_est = g * g * Tp
        # f_k <= p_k termwise
        tail_bound = min(Tp, 1.0 - S)
    else:
        Tp = 0.0
        tail_est = 1.0 - S
        tail_bound = 1.0 - S
    return ReturnTimePmf(d, K, f, cum, p, float(tail_bound), float(tail_est), float(Tp))


def return_time_pmf(d: int, K: int | None = None) -> ReturnTimePmf:
    """First return time law up to horizon ``K``.

    Raises ``ValueError`` for ``K < 2`` and ``MemoryError`` when ``K`` is
    beyond the supported work budget.
    """
    if K is None:
        K = default_horizon(d)
    return _pmf_cached(int(d), _check_horizon(K))


def _solve_gamma(S: float, Tp: float) -> float:
    # sum_{k>K} f_k ~ gamma^2 sum_{k>K} p_k and gamma = 1 - S - that tail
    r = 1.0 - S
    if Tp <= 0:
        return r
    return (-1.0 + math.sqrt(1.0 + 4.0 * Tp * r)) / (2.0 * Tp)


@dataclass(frozen=True)
class GammaEstimate:
    """Escape probability with its error budget; unpacks as
    ``(estimate, error_bound)``."""

    estimate: float
    error_bound: float
    dim: int
    horizon: int
    partial_sum: float
    tail_estimate: float

    def __iter__(self):
        return iter((self.estimate, self.error_bound))


def gamma(d: int, K: int | None = None) -> GammaEstimate:
    """Probability that the walk never returns to the origin.

    For ``d <= 2`` the walk is recurrent: the estimate is 0 and the error
    bound is the unreturned mass ``1 - sum_{k<=K} f_k``.
    """
    pmf = return_time_pmf(d, K)
    return gamma_from_pmf(pmf)


def gamma_from_pmf(pmf: ReturnTimePmf) -> GammaEstimate:
    S = pmf.partial_sum
    if pmf.dim <= 2:
        return GammaEstimate(0.0, 1.0 - S, pmf.dim, pmf.horizon, S, 1.0 - S)
    g = 1.0 - S - pmf.tail_estimate
    # the rescaled local-limit tail is accurate to O(1/K) relatively; 10% is generous
    err = 0.1 * pmf.tail_estimate + 1e-12
    return GammaEstimate(g, err, pmf.dim, pmf.horizon, S, pmf.tail_estimate)


@dataclass(frozen=True)
class FValue:
    value: float
    error_bound: float
    series_value: float
    series_error_bound: float


def f_eval_bounded(u: float, pmf: ReturnTimePmf) -> FValue:
    """``f(u)`` in both of its forms, each with a truncation error bound.

    ``f(u) = 1 + u - sum_k f_k (1+u)^{-(k-1)}`` and, equivalently,
    ``f(u) = u + u sum_{k>=1} (1+u)^{-k} P(tau_0 >= k+1)``.
    """
    if not u > 0:
        raise ValueError("u must be positive")
    K = pmf.horizon
    k = np.arange(K + 1)
    s = math.log1p(u)
    disc = np.exp(-s * k)  # (1+u)^{-k}
    x_K = disc[-1]

    head = float(np.dot(pmf.pmf, disc))
    if pmf.dim >= 3:
        g = gamma_from_pmf(pmf).estimate
        tail = g * g * return_tail(pmf.dim, pmf.return_probs, s)
        tail = min(tail, pmf.tail_bound * x_K)
        tail_err = min(0.1 * tail, pmf.tail_bound * x_K) + 1e-15
    else:
        g = 0.0
        tail = 0.0
        tail_err = pmf.tail_bound * x_K + 1e-15
    value = (1.0 + u) * (1.0 - head - tail)
    err = (1.0 + u) * tail_err

    surv = pmf.survival()
    series_head = u * float(np.dot(disc[1:], surv[1:]))
    # k > K: P(tau_0 >= k+1) lies between gamma and 1 - S_K
    lo = max(g - gamma_from_pmf(pmf).error_bound, 0.0) if pmf.dim >= 3 else 0.0
    hi = float(surv[-1])
    series_tail = 0.5 * (lo + hi) * x_K
    series = u + series_head + series_tail
    series_err = 0.5 * (hi - lo) * x_K + 1e-15
    return FValue(value, err, series, series_err)


def f_eval(u: float, pmf: ReturnTimePmf) -> float:
    """Evaluate ``f(u)``; cross-checks the two equivalent expressions."""
    r = f_eval_bounded(u, pmf)
    scale = 1e-12 * max(1.0, abs(r.value))
    if abs(r.value - r.series_value) > r.error_bound + r.series_error_bound + scale:
        raise AssertionError(
            f"f({u}) forms disagree: {r.value!r} vs {r.series_value!r}"
        )
    return r.value


@dataclass(frozen=True)
class RootSolution:
    """Root of ``f(u) = epsilon``; unpacks as ``(u_star, nu0)``.

    ``error_bound`` bounds ``|u_star - u_true|``: bisection width plus the
    truncation bound on ``f`` near the root (``f' >= 1``, so an error ``e``
    in ``f`` moves the root by at most ``e``).
    """

    u_star: float
    nu0: float
    gamma_d: float
    iterations: int
    near_critical: bool
    error_bound: float = 0.0

    def __iter__(self):
        return iter((self.u_star, self.nu0))


def solve_nu0(params: ModelParams, pmf: ReturnTimePmf | None = None, tol: float = ROOT_TOL,
              max_iter: int = ROOT_MAX_ITER, trace: list | None = None) -> RootSolution:
    """Solve ``f(u) = epsilon`` by bisection and return ``u*`` and
    ``nu0 = u*/epsilon``.

    ``f`` increases from ``gamma_d`` at ``0+`` and ``f(u) >= u``, so
    ``[0, epsilon]`` brackets the root whenever ``epsilon > gamma_d``.
    If ``trace`` is a list, ``(lo, hi, f(lo), f(hi))`` is appended at every
    iteration.
    """
    eps = params.epsilon
    if pmf is None:
        pmf = return_time_pmf(params.d)
    elif pmf.dim != params.d:
        raise ValueError("pmf dimension does not match params.d")
    gam = gamma_from_pmf(pmf)
    g = gam.estimate
    if eps <= g:
        raise NoStationaryMeasure(
            f"epsilon = {eps!r} <= gamma_{params.d} = {g!r}: no stationary probability measure"
        )
    near = abs(eps - g) < max(NEAR_CRITICAL, gam.error_bound)
    if near:
        warnings.warn(
            f"epsilon = {eps!r} is within {abs(eps - g):.2e} of gamma_{params.d}; "
            "root is numerically unreliable", NearCriticalWarning, stacklevel=2)
    lo, hi = 0.0, eps
    f_lo, f_hi = g, f_eval(hi, pmf)
    while not f_hi > eps:
        # f(u) > u strictly, so only rounding can land here
        hi *= 2.0
        f_hi = f_eval(hi, pmf)
    it = 0
    exact = None
    while hi - lo > tol:
        if it >= max_iter:
            raise ConvergenceError(f"bisection did not reach tol {tol} in {max_iter} iterations")
        if trace is not None:
            trace.append((lo, hi, f_lo, f_hi))
        mid = 0.5 * (lo + hi)
        f_mid = f_eval(mid, pmf)
        it += 1
        if f_mid == eps:
            exact = mid
            break
        if f_mid < eps:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    u = 0.5 * (lo + hi) if exact is None else exact
    # the truncation bound shrinks with u, so take it at the lower end
    fb = f_eval_bounded(max(lo, 0.5 * u), pmf)
    err = tol + max(fb.error_bound, fb.series_error_bound)
    return RootSolution(u, u / eps, g, it, near, err)


@dataclass(frozen=True)
class StationarySolution:
    """Stationary profile on a truncated box.

    ``nu = nu0 * h`` where ``h(x) = E_x[(1+u)^{-tau_0}]`` with Dirichlet-zero
    data outside the box.
    """

    params: ModelParams
    u_star: float
    nu0: float
    box: BoxIndex
    nu: SparseMeasure = field(repr=False)
    values: np.ndarray = field(repr=False)
    residuals: float  # max residual of the balance equation off the origin
    origin_residual: float  # residual of the balance equation at the origin
    mass_defect: float
    mass_budget: float
    nu0_normalised: float
    sweeps: int

    def to_dict(self) -> dict:
        return {
            "u_star": self.u_star,
            "nu0": self.nu0,
            "residuals": {"off_origin": self.residuals, "origin": self.origin_residual},
            "mass_defect": self.mass_defect,
            "mass_budget": self.mass_budget,
            "box_radius": self.box.radius,
            "nu": self.nu.to_records(),
        }


def mass_budget(d: int, nu0: float, u: float, R: int) -> float:
    """Bound on the profile mass outside the box of radius ``R``."""
    return nu0 * (2 * R + 3) ** d * math.exp(-R * math.log1p(u))


def default_radius(d: int, nu0: float, u: float, target: float = 1e-13, max_size: int = 20_000_000) -> int:
    """Smallest radius whose outside-mass budget is below ``target``."""
    R = 2
    while mass_budget(d, nu0, u, R) > target:
        R += 1
        if (2 * R + 1) ** d > max_size:
            raise MemoryError(f"box needed for u = {u:g} in d = {d} is too large")
    return R


def _solve_h(d: int, R: int, u: float, tol: float, max_sweeps: int) -> tuple[np.ndarray, int]:
    side = 2 * R + 1
    pad = np.zeros((side + 2,) * d)
    core = tuple(slice(1, -1) for _ in range(d))
    centre = (R + 1,) * d
    parity = np.indices((side,) * d).sum(axis=0) % 2
    colours = [parity == 0, parity == 1]
    coef = 1.0 / (2 * d * (1.0 + u))
    # start from the geometric upper bound
    linf = np.abs(np.indices((side,) * d) - R).max(axis=0)
    pad[core] = (1.0 + u) ** (-linf.astype(float))
    for sweep in range(1, max_sweeps + 1):
        for mask in colours:
            view = pad[core]
            view[mask] = coef * padded_neighbour_sum(pad)[mask]
            pad[centre] = 1.0
        if sweep % 10 == 0 or sweep == max_sweeps:
            res = np.abs((1.0 + u) * pad[core] - padded_neighbour_sum(pad) / (2 * d))
            res[(R,) * d] = 0.0
            if res.max() <= tol:
                return pad[core].copy(), sweep
    raise ConvergenceError(f"Gauss-Seidel did not reach {tol} in {max_sweeps} sweeps")


def nu_profile(params: ModelParams, u_star: float, box: BoxIndex | None = None,
               tol: float = PROFILE_TOL, max_sweeps: int = 200_000,
               defect_tolerance: float = 1e-9) -> StationarySolution:
    """Stationary profile ``nu_x = nu0 E_x[(1+u)^{-tau_0}]`` on a box.

    Solves ``(1+u) h(x) = (1/2d) sum_{y~x} h(y)`` for ``x != 0`` with
    ``h(0) = 1`` and ``h = 0`` outside the box, by red-black Gauss-Seidel.
    Raises ``MassBudgetExceeded`` when ``|1 - sum nu|`` is larger than the
    geometric tail budget plus ``defect_tolerance``.
    """
    if not u_star > 0:
        raise ValueError("u_star must be positive")
    d, eps = params.d, params.epsilon
    if eps <= 0:
        raise NoStationaryMeasure("epsilon must be positive")
    nu0 = u_star / eps
    if box is None:
        box = BoxIndex(default_radius(d, nu0, u_star), d)
    if box.dim != d:
        raise ValueError("box dimension does not match params.d")
    if box.radius < 2:
        raise ValueError("box radius must be at least 2")
    R = box.radius
    h, sweeps = _solve_h(d, R, u_star, tol, max_sweeps)
    nu = nu0 * h

    pad = np.zeros(tuple(s + 2 for s in nu.shape))
    pad[tuple(slice(1, -1) for _ in range(d))] = nu
    nb = padded_neighbour_sum(pad) / (2 * d)
    res1 = np.abs((1.0 + eps * nu0) * nu - nb)
    res1[(R,) * d] = 0.0
    res2 = abs((1.0 - eps * (1.0 - nu0)) * nu0 - nb[(R,) * d])
    total = float(nu.sum())
    defect = 1.0 - total
    budget = mass_budget(d, nu0, u_star, R)
    if abs(defect) > budget + defect_tolerance:
        raise MassBudgetExceeded(
            f"mass defect {defect:.3e} exceeds budget {budget:.3e}; enlarge the box")
    flat = nu.ravel()
    return StationarySolution(
        params=params, u_star=float(u_star), nu0=float(nu0), box=box,
        nu=SparseMeasure.from_box(box, flat), values=flat,
        residuals=float(res1.max()), origin_residual=float(res2),
        mass_defect=float(defect), mass_budget=float(budget),
        nu0_normalised=float(nu0 / total), sweeps=sweeps,
    )


def stationary_measure(params: ModelParams, radius: int | None = None,
                       pmf: ReturnTimePmf | None = None) -> StationarySolution:
    """Convenience: ``solve_nu0`` followed by ``nu_profile``."""
    root = solve_nu0(params, pmf)
    box = BoxIndex(radius, params.d) if radius is not None else None
    return nu_profile(params, root.u_star, box)
