"""Parameter scans and the three-way comparison of routes to the limit
measure."""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .brw import SimConfig, column_stats, replicate
from .lattice import BoxIndex, SparseMeasure, format_site, total_variation
from .params import ModelParams
from .walk import NoStationaryMeasure, gamma as walk_gamma, nu_profile, solve_nu0

NO_MEASURE = "no stationary measure"
PROVED = "localisation (proved)"
CONJECTURED = "conjectured localisation"


def classify(d: int, lam: float, lambda0: float, gamma_d: float) -> dict:
    """Regime labels; a pure function of the parameters and ``gamma_d``.

    ``label`` is the headline: no stationary measure when
    ``epsilon <= gamma_d``, proved localisation above ``2d - 1 + 2d lam``,
    and the conjectured band in between. ``weak_bound`` is the almost-sure
    lower bound ``(epsilon - 1)/epsilon`` on the origin fraction when
    ``lambda0 > 1 + lam``.
    """
    eps = lambda0 - lam
    threshold = 2 * d - 1 + 2 * d * lam
    exists = eps > gamma_d
    if not exists:
        label = NO_MEASURE
    elif lambda0 > threshold:
        label = PROVED
    else:
        label = CONJECTURED
    return {
        "label": label,
        "stationary_measure": bool(exists),
        "weak_localisation": bool(lambda0 > 1 + lam),
        "weak_bound": (eps - 1.0) / eps if lambda0 > 1 + lam else None,
        "strong_threshold": threshold,
        "above_strong_threshold": bool(lambda0 > threshold),
    }


def _scan_point(d, lam, lambda0, g, t_obs, n_replicas, seed, cap, simulate):
    row = {"d": d, "lambda": lam, "lambda0": lambda0, "epsilon": lambda0 - lam, "gamma_d": g}
    row.update(classify(d, lam, lambda0, g))
    params = ModelParams(d, lam, lambda0)
    row["nu0"] = None
    row["growth_rate"] = None
    if row["stationary_measure"]:
        root = solve_nu0(params)
        row["nu0"] = root.nu0
        row["growth_rate"] = lam + params.epsilon * root.nu0
    row["sim_pi_hat_0"] = row["sim_pi_hat_0_se"] = None
    row["sim_ci_lo"] = row["sim_ci_hi"] = None
    if simulate and n_replicas > 0 and lam > 0:
        cfg = SimConfig(params, t_max=t_obs, particle_cap=cap, seed=seed, observe_at=(t_obs,))
        rs = replicate(cfg, n_replicas)
        m, se = float(rs["pi_hat_0"].mean[0]), float(rs["pi_hat_0"].se[0])
        row.update(sim_pi_hat_0=m, sim_pi_hat_0_se=se, sim_ci_lo=m - 1.96 * se, sim_ci_hi=m + 1.96 * se,
                   sim_statuses=dict(rs.statuses))
    return row


def phase_scan(d: int, points, t_obs: float = 10.0, n_replicas: int = 50, seed: int = 0,
               cap: int = 10_000_000, simulate: bool = True, threads: int = 1,
               gamma_d: float | None = None) -> list[dict]:
    """One row per ``(lam, lambda0)`` in ``points``, in input order.

    Every point uses the same seed, so points that share parameters share
    replicas.
    """
    points = [(float(a), float(b)) for a, b in points]
    if not points:
        raise ValueError("the grid is empty")
    g = walk_gamma(d).estimate if gamma_d is None else float(gamma_d)
    args = [(d, lam, l0, g, t_obs, n_replicas, seed, cap, simulate) for lam, l0 in points]
    if threads <= 1:
        return [_scan_point(*a) for a in args]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda a: _scan_point(*a), args))


def grid(lams, lambda0s) -> list[tuple[float, float]]:
    """Cartesian product keeping only ``lambda0 >= lam``."""
    return [(a, b) for a in lams for b in lambda0s if b >= a]


@dataclass(frozen=True)
class RouteReport:
    params: ModelParams
    nu_balance: SparseMeasure | None = field(repr=False)
    nu_qsd: SparseMeasure | None = field(repr=False)
    sim_sites: list = field(repr=False)
    sim_mean: np.ndarray = field(repr=False)
    sim_se: np.ndarray = field(repr=False)
    tv: dict
    growth_slope: float
    growth_slope_se: float
    predicted_growth: float | None
    sim_pi_hat_0: float
    sim_pi_hat_0_se: float
    notes: list

    def site_table(self) -> list[dict]:
        rows = []
        for j, x in enumerate(self.sim_sites):
            rows.append({
                "site": format_site(x),
                "balance": self.nu_balance[x] if self.nu_balance is not None else None,
                "qsd": self.nu_qsd[x] if self.nu_qsd is not None else None,
                "sim_mean": float(self.sim_mean[j]),
                "sim_se": float(self.sim_se[j]),
            })
        return rows


def _coarse(measure: SparseMeasure, sites) -> np.ndarray:
    vals = np.array([measure[x] for x in sites])
    return np.append(vals, max(0.0, 1.0 - vals.sum()))


def _tv_vec(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * float(np.abs(a - b).sum())


def compare_routes(params: ModelParams, radius: int = 40, n_replicas: int = 100, t_obs: float = 10.0,
                   seed: int = 0, site_radius: int = 3, cap: int = 10_000_000) -> RouteReport:
    """Balance equations, killed-process QSD, and simulation side by side.

    Distances involving the simulation are taken on the partition made of
    the observed sites (``|x|_inf <= site_radius``) plus their complement.
    The growth slope is the replica average of per-replica least-squares
    slopes of ``log N_t`` over ``[t_obs/2, t_obs]``.
    """
    from .qsd import solve_qsd

    notes = []
    d = params.d
    box = BoxIndex(radius, d)
    nu_bal = nu_q = None
    predicted = None
    try:
        root = solve_nu0(params)
        nu_bal = nu_profile(params, root.u_star, box).nu
        predicted = params.lam + params.epsilon * root.nu0
    except NoStationaryMeasure as exc:
        notes.append(f"balance equations: {exc}")
    if params.lambda0 > params.lam:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            nu_q = solve_qsd(params, radius).limit_measure
        notes.extend(str(w.message) for w in caught)
    else:
        notes.append("killed process undefined for lambda0 = lam")

    sites = [x for x in BoxIndex(site_radius, d).sites()]
    times = tuple(np.linspace(t_obs / 2, t_obs, 11))
    cfg = SimConfig(params, t_max=t_obs, particle_cap=cap, seed=seed, observe_at=times,
                    observe_sites=tuple(sites))
    rs = replicate(cfg, n_replicas, keep=True)
    sim = np.array([rs[f"pi_hat[{format_site(x)}]"].mean[-1] for x in sites])
    sim_se = np.array([rs[f"pi_hat[{format_site(x)}]"].se[-1] for x in sites])
    sim_vec = np.append(sim, max(0.0, 1.0 - sim.sum()))
    t = np.asarray(times)
    slopes = np.array([np.polyfit(t, np.log(tr.N), 1)[0] for tr in rs.trajectories
                       if not np.isnan(tr.N).any()])
    st = column_stats(slopes[:, None])

    tv = {}
    if nu_bal is not None and nu_q is not None:
        tv["balance_qsd"] = total_variation(nu_bal, nu_q)
    if nu_bal is not None:
        tv["balance_sim"] = _tv_vec(_coarse(nu_bal, sites), sim_vec)
    if nu_q is not None:
        tv["qsd_sim"] = _tv_vec(_coarse(nu_q, sites), sim_vec)
    origin_j = sites.index(tuple(0 for _ in range(d)))
    return RouteReport(params, nu_bal, nu_q, sites, sim, sim_se, tv, float(st.mean[0]),
                       float(st.se[0]), predicted, float(sim[origin_j]), float(sim_se[origin_j]),
                       notes)


__all__ = ["classify", "phase_scan", "grid", "compare_routes", "RouteReport"]
