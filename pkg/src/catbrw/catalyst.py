"""Catalyst-only process and first-moment machinery.

The comparison process branches only at the origin, at rate ``epsilon``,
and jumps at rate 1 everywhere. Its mean occupation ``u(x, t)`` solves

    du/dt = Laplacian u + epsilon 1{x=0} u,

and the full process has mean ``e^{lam t}`` times that. ``Laplacian`` is
``(1/2d) sum_{y~x} f(y) - f(x)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.stats import skellam

from .brw import SimConfig, Trajectory, column_stats, replica_rng, run
from .lattice import BoxIndex, Site, padded_neighbour_sum
from .params import ModelParams

ESCAPE_RADIUS = 20.0
PROGENY_CAP = 10_000_000


def catalyst_params(d: int, epsilon: float) -> ModelParams:
    return ModelParams(d, 0.0, float(epsilon))


def simulate_catalyst(config: SimConfig, replica: int = 0, debug: bool = False) -> Trajectory:
    """Run the compiled engine with ``lam = 0``."""
    if config.params.lam != 0:
        raise ValueError("the catalyst-only process has lam = 0")
    if not config.params.epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not config.allow_zero_lambda:
        raise ValueError("build the SimConfig with allow_zero_lambda=True")
    return run(config, replica, debug=debug)


# --------------------------------------------------------------------------
# total progeny of the subcritical process


@numba.njit(cache=True, nogil=True)
def _progeny_one(rng, d, eps, gamma_hat, radius, cap):
    """Total number of particles ever alive.

    Particles are processed one at a time. While at the origin a particle
    branches with probability eps/(1+eps) per event; away from it, its path
    is simulated step by step until it returns or reaches Euclidean radius
    ``radius``, where it returns with the far-field probability
    ``gamma_hat * G(x)``, ``G(x) ~ d Gamma(d/2 - 1) / (2 pi^{d/2} |x|^{d-2})``.
    """
    green_c = d * math.gamma(d / 2.0 - 1.0) / (2.0 * math.pi ** (d / 2.0))
    p_branch = eps / (1.0 + eps)
    r2 = radius * radius
    pending = 1
    total = 1
    x = np.zeros(d, dtype=np.int64)
    while pending > 0:
        pending -= 1
        # a fresh particle sits at the origin
        while True:
            if rng.random() < p_branch:
                pending += 1
                total += 1
                if total >= cap:
                    return total, True
                continue
            for a in range(d):
                x[a] = 0
            direction = rng.integers(0, 2 * d)
            x[direction // 2] += 1 - 2 * (direction % 2)
            returned = False
            while True:
                s = 0
                n2 = 0
                for a in range(d):
                    s += abs(x[a])
                    n2 += x[a] * x[a]
                if s == 0:
                    returned = True
                    break
                if n2 >= r2:
                    p_ret = gamma_hat * green_c / math.sqrt(n2) ** (d - 2)
                    returned = rng.random() < p_ret
                    break
                direction = rng.integers(0, 2 * d)
                x[direction // 2] += 1 - 2 * (direction % 2)
            if not returned:
                break
    return total, False


@dataclass(frozen=True)
class ProgenyEstimate:
    mean: float
    se: float
    var: float
    n_replicas: int
    capped: int
    predicted: float  # 1 / (1 - eps / gamma_d)
    samples: np.ndarray = field(repr=False)


def catalyst_total_progeny(d: int, epsilon: float, n_replicas: int, seed: int = 0,
                           gamma_hat: float | None = None, radius: float = ESCAPE_RADIUS,
                           cap: int = PROGENY_CAP) -> ProgenyEstimate:
    """Monte Carlo total progeny of the catalyst-only process for
    ``epsilon < gamma_d`` (``d >= 3``).

    Each particle's excursions from the origin are simulated exactly inside
    the ball of radius ``radius``; beyond it the return probability comes
    from the Green function asymptote scaled by ``gamma_hat``.
    """
    from .walk import gamma as walk_gamma

    if d < 3:
        raise ValueError("the progeny is finite only for transient walks (d >= 3)")
    if gamma_hat is None:
        gamma_hat = walk_gamma(d).estimate
    if not 0 < epsilon < gamma_hat:
        raise ValueError("need 0 < epsilon < gamma_d for a finite mean progeny")
    out = np.empty(n_replicas)
    capped = 0
    for r in range(n_replicas):
        total, hit = _progeny_one(replica_rng(seed, r), d, float(epsilon), float(gamma_hat),
                                  float(radius), int(cap))
        out[r] = total
        capped += int(hit)
    st = column_stats(out[:, None])
    m = epsilon / gamma_hat
    return ProgenyEstimate(float(st.mean[0]), float(st.se[0]), float(st.var[0]), n_replicas,
                           capped, 1.0 / (1.0 - m), out)


def progeny_mean(d: int, epsilon: float, gamma_d: float) -> float:
    """``1/(1-m)`` with ``m = epsilon/gamma_d`` the mean offspring number."""
    m = epsilon / gamma_d
    if m >= 1:
        return math.inf
    return 1.0 / (1.0 - m)


# --------------------------------------------------------------------------
# moment ODE


class IntegratorError(RuntimeError):
    pass


@dataclass(frozen=True)
class MomentField:
    """Mean occupation ``u(., t)`` on a box with its error budgets."""

    params: ModelParams
    box: BoxIndex
    t: float
    values: np.ndarray = field(repr=False)  # flat, in box order
    dt: float
    step_error: float  # step-doubling estimate, max over sites
    truncation_budget: float  # bound on the mean mass lost through the box boundary

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def at(self, x: Site) -> float:
        return float(self.values[self.box.encode(tuple(x))])


def default_moment_radius(t_end: float) -> int:
    return int(math.ceil(4 * t_end)) + 2


def default_dt(params: ModelParams) -> float:
    return 1e-3 * min(1.0, 1.0 / params.lambda0) if params.lambda0 > 0 else 1e-3


def truncation_budget(params: ModelParams, radius: int, t: float) -> float:
    """``e^{lambda0 t} P(walk leaves the box before t)``.

    Each coordinate moves as a Skellam process of intensity ``t/(2d)`` per
    direction; reflection and a union bound over the 2d faces give
    ``4d P(S_t >= R+1)``.
    """
    mu = t / (2 * params.d)
    if mu == 0:
        return 0.0
    p_exit = min(1.0, 4 * params.d * float(skellam.sf(radius, mu, mu)))
    return math.exp(params.lambda0 * t) * p_exit


def _rate_field(params: ModelParams, box: BoxIndex) -> np.ndarray:
    rates = np.full(box.shape, float(params.lam))
    rates[(box.radius,) * box.dim] = params.lambda0
    return rates


def _rk4(u0, rates, d, dt, n_steps, snapshot_every=0):
    pad = np.zeros(tuple(s + 2 for s in u0.shape))
    core = tuple(slice(1, -1) for _ in range(d))
    diag = rates - 1.0
    inv = 1.0 / (2 * d)

    def L(u):
        pad[core] = u
        return padded_neighbour_sum(pad) * inv + diag * u

    u = u0.copy()
    snaps = [u.copy()] if snapshot_every else []
    for k in range(1, n_steps + 1):
        k1 = L(u)
        k2 = L(u + 0.5 * dt * k1)
        k3 = L(u + 0.5 * dt * k2)
        k4 = L(u + dt * k3)
        u = u + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if snapshot_every and k % snapshot_every == 0:
            snaps.append(u.copy())
    return u, snaps


def _steps(t_end: float, dt: float) -> int:
    n = int(round(t_end / dt))
    if n < 0 or abs(n * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end must be a multiple of dt")
    return n


def moment_trajectory(params: ModelParams, box: BoxIndex, times, dt: float | None = None,
                      step_tol: float = 1e-6, budget_tol: float = 1e-6,
                      check_step: bool = True) -> list[MomentField]:
    """``u(., t)`` at each of the (increasing, dt-aligned) ``times``.

    The step-doubling error compares the run at ``dt`` with one at
    ``2 dt``; it and the truncation budget are checked relative to the
    total mass.
    """
    if dt is None:
        dt = default_dt(params)
    if box.dim != params.d:
        raise ValueError("box dimension does not match params.d")
    rates = _rate_field(params, box)
    if dt * float(np.abs(rates - 1.0).max()) > 1.0:
        raise IntegratorError("dt too large for a positivity-preserving step")
    times = [float(t) for t in times]
    grid = [_steps(t, dt) for t in times]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("times must be increasing")
    u0 = np.zeros(box.shape)
    u0[(box.radius,) * box.dim] = 1.0

    fine = []
    u, done = u0, 0
    for n in grid:
        u, _ = _rk4(u, rates, params.d, dt, n - done)
        done = n
        fine.append(u)
    coarse = None
    if check_step and all(n % 2 == 0 for n in grid):
        coarse = []
        u, done = u0, 0
        for n in grid:
            u, _ = _rk4(u, rates, params.d, 2 * dt, (n - done) // 2)
            done = n
            coarse.append(u)
    out = []
    for i, (t, u) in enumerate(zip(times, fine)):
        if np.any(u < -1e-14 * max(1.0, float(np.abs(u).max()))):
            raise IntegratorError("integrator produced negative mass")
        err = float(np.abs(u - coarse[i]).max()) / 15.0 if coarse is not None else float("nan")
        budget = truncation_budget(params, box.radius, t)
        total = float(u.sum())
        if err > step_tol * max(total, 1.0):
            raise IntegratorError(f"step-doubling error {err:.3e} above tolerance at t={t}")
        if budget > budget_tol * max(total, 1.0):
            raise IntegratorError(f"truncation budget {budget:.3e} above tolerance at t={t}")
        out.append(MomentField(params, box, t, u.ravel().copy(), dt, err, budget))
    return out


def moment_ode(params: ModelParams, box: BoxIndex | None, t_end: float, dt: float | None = None,
               **kwargs) -> MomentField:
    """Integrate the mean equation from ``delta_0`` to ``t_end`` with
    Dirichlet-zero data outside ``box`` by classical RK4."""
    if box is None:
        box = BoxIndex(default_moment_radius(t_end), params.d)
    return moment_trajectory(params, box, [t_end], dt, **kwargs)[0]


def heat_kernel_origin(d: int, t) -> np.ndarray:
    """``P(X(t) = 0)`` for the rate-1 continuous-time walk,
    ``(e^{-t/d} I_0(t/d))^d``."""
    from scipy.special import ive

    return ive(0, np.asarray(t, dtype=float) / d) ** d


@dataclass(frozen=True)
class IdentityCheck:
    max_rel_error: float
    rows: list  # (site, t, u_full, e^{lam t} u_catalyst, rel_error)


def moment_identity(params: ModelParams, box: BoxIndex, times, sites, dt: float | None = None) -> IdentityCheck:
    """Compare ``u_(lam, lambda0)`` with ``e^{lam t} u_(0, epsilon)``."""
    full = moment_trajectory(params, box, times, dt, check_step=False)
    cat = moment_trajectory(catalyst_params(params.d, params.epsilon), box, times, dt,
                            check_step=False)
    rows, worst = [], 0.0
    for a, b in zip(full, cat):
        for x in sites:
            ua = a.at(x)
            ub = math.exp(params.lam * a.t) * b.at(x)
            rel = abs(ua - ub) / max(abs(ua), 1e-300)
            worst = max(worst, rel)
            rows.append((tuple(x), a.t, ua, ub, rel))
    return IdentityCheck(worst, rows)


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class CampbellResult:
    max_residual: float
    quadrature_error: float
    times: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)


def campbell_check(params: ModelParams, x: Site, t_grid, dt: float | None = None,
                   box: BoxIndex | None = None, quad_tol: float = 1e-3) -> CampbellResult:
    """Residual of ``u(x,t) = eps int_0^t u(x,t-s) p_s(0,0) ds + p_t(0,x)``.

    ``t_grid`` must be uniform, start at 0 and be aligned to ``dt``. The
    integral uses the trapezoid rule; its error is estimated by comparing
    with the same rule on every other grid point.
    """
    if params.lam != 0:
        raise ValueError("the recursion holds for the catalyst-only process (lam = 0)")
    t_grid = np.asarray(t_grid, dtype=float)
    h = t_grid[1] - t_grid[0]
    if t_grid[0] != 0 or not np.allclose(np.diff(t_grid), h):
        raise ValueError("t_grid must be uniform and start at 0")
    if dt is None:
        dt = min(default_dt(params), h)
    if box is None:
        box = BoxIndex(default_moment_radius(t_grid[-1]), params.d)
    heat_params = ModelParams(params.d, 0.0, 0.0)
    u = np.array([f.at(x) for f in moment_trajectory(params, box, t_grid, dt, check_step=False)])
    heat = moment_trajectory(heat_params, box, t_grid, dt, check_step=False)
    p00 = np.array([f.at(tuple(0 for _ in x)) for f in heat])
    p0x = np.array([f.at(x) for f in heat])
    eps = params.epsilon
    n = len(t_grid)
    res = np.zeros(n)
    qerr = 0.0
    for i in range(n):
        integrand = u[i::-1] * p00[: i + 1]
        fine = h * (integrand.sum() - 0.5 * (integrand[0] + integrand[-1])) if i > 0 else 0.0
        res[i] = u[i] - (eps * fine + p0x[i])
        if i >= 2 and i % 2 == 0:
            sub = integrand[::2]
            coarse = 2 * h * (sub.sum() - 0.5 * (sub[0] + sub[-1]))
            qerr = max(qerr, eps * abs(fine - coarse) / 3.0)
    if qerr > quad_tol:
        raise QuadratureError(f"quadrature error estimate {qerr:.3e} above {quad_tol:g}")
    return CampbellResult(float(np.abs(res).max()), qerr, t_grid, res)
