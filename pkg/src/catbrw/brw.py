"""Exact event-driven simulation of the catalytic branching random walk.

Each particle carries a jump clock of rate 1 and a branching clock of rate
``lambda_x``. All clocks are pooled: the total rate is
``N (1 + lam) + epsilon n0`` where ``n0`` is the number of particles at the
origin. A single uniform variate then picks the particle and the kind of
event, so every step costs O(1).

Replica ``r`` of a run with seed ``s`` draws from
``numpy.random.default_rng(SeedSequence([s, r]))`` (PCG64), which makes
results reproducible across platforms.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .lattice import Site, format_site, origin
from .params import ModelParams

STATUS_HORIZON = "horizon_reached"
STATUS_CAP = "cap_reached"
_STATUS = (STATUS_HORIZON, STATUS_CAP)
DEFAULT_CAP = 10_000_000


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    """Independent stream for replica ``replica`` of run ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(replica)]))


# --------------------------------------------------------------------------
# reference implementation (pure Python), one event at a time


class _Kahan:
    __slots__ = ("s", "c")

    def __init__(self):
        self.s = 0.0
        self.c = 0.0

    def add(self, x: float):
        y = x - self.c
        t = self.s + y
        self.c = (t - self.s) - y
        self.s = t


class PopulationState:
    """Live particle configuration with cached totals."""

    def __init__(self, d: int):
        self.d = d
        self.particles: list[list[int]] = [[0] * d]
        self.origin_members: list[int] = [0]
        self._where: list[int] = [0]  # slot in origin_members, or -1
        self.t = 0.0
        self._A = _Kahan()

    @property
    def n_total(self) -> int:
        return len(self.particles)

    @property
    def n_origin(self) -> int:
        return len(self.origin_members)

    @property
    def rho_integral(self) -> float:
        return self._A.s - self._A.c

    def rho(self, params: ModelParams) -> float:
        return params.lam + params.epsilon * self.n_origin / self.n_total

    def total_rate(self, params: ModelParams) -> float:
        return self.n_total * (1.0 + params.lam) + params.epsilon * self.n_origin

    def recount_rate(self, params: ModelParams) -> float:
        """Total event rate summed particle by particle."""
        return float(sum(1.0 + params.rate(p) for p in self.particles))

    def check(self):
        at0 = [i for i, p in enumerate(self.particles) if not any(p)]
        assert sorted(at0) == sorted(self.origin_members)
        for slot, i in enumerate(self.origin_members):
            assert self._where[i] == slot

    def _leave_origin(self, i: int):
        slot = self._where[i]
        last = self.origin_members.pop()
        if last != i:
            self.origin_members[slot] = last
            self._where[last] = slot
        self._where[i] = -1

    def _enter_origin(self, i: int):
        self._where[i] = len(self.origin_members)
        self.origin_members.append(i)

    def counts(self, sites: Sequence[Site]) -> list[int]:
        keys = {tuple(s): k for k, s in enumerate(sites)}
        out = [0] * len(sites)
        for p in self.particles:
            k = keys.get(tuple(p))
            if k is not None:
                out[k] += 1
        return out


@dataclass(frozen=True)
class EventRecord:
    kind: str  # "jump", "branch" or "origin_branch"
    particle: int
    site_before: Site
    site_after: Site
    dt: float
    total_rate: float


def gillespie_step(state: PopulationState, params: ModelParams, rng: np.random.Generator) -> EventRecord:
    """Advance ``state`` by one event.

    Consumes the random stream in the same order as the compiled engine
    (exponential, uniform, then a direction for jumps), so the two produce
    identical paths from identical generators.
    """
    N, n0 = state.n_total, state.n_origin
    lam, eps = params.lam, params.epsilon
    rate = N * (1.0 + lam) + eps * n0
    rho = lam + eps * n0 / N
    dt = rng.standard_exponential() / rate
    state.t += dt
    state._A.add(rho * dt)
    U = rng.random() * rate
    base = N * (1.0 + lam)
    if U < base:
        i = min(int(U / (1.0 + lam)), N - 1)
        jump = (U - i * (1.0 + lam)) < 1.0
        kind = "jump" if jump else "branch"
    else:
        k = min(int((U - base) / eps), n0 - 1)
        i = state.origin_members[k]
        jump = False
        kind = "origin_branch"
    before = tuple(state.particles[i])
    if jump:
        direction = int(rng.integers(0, 2 * state.d))
        axis, step = direction // 2, 1 - 2 * (direction % 2)
        was0 = state._where[i] >= 0
        state.particles[i][axis] += step
        if was0:
            state._leave_origin(i)
        elif not any(state.particles[i]):
            state._enter_origin(i)
        after = tuple(state.particles[i])
    else:
        state.particles.append(list(before))
        state._where.append(-1)
        if state._where[i] >= 0:
            state._enter_origin(len(state.particles) - 1)
        after = before
    return EventRecord(kind, i, before, after, dt, rate)


# --------------------------------------------------------------------------
# compiled engine


@numba.njit(cache=True, nogil=True)
def _count_sites(pos, N, sites, out):
    k = sites.shape[0]
    d = sites.shape[1]
    for j in range(k):
        out[j] = 0.0
    for i in range(N):
        for j in range(k):
            same = True
            for a in range(d):
                if pos[i, a] != sites[j, a]:
                    same = False
                    break
            if same:
                out[j] += 1.0


@numba.njit(cache=True, nogil=True)
def _engine(rng, d, lam, eps, t_max, max_events, cap, obs_t, obs_ev, sites, debug):
    n_t = obs_t.shape[0]
    n_e = obs_ev.shape[0]
    n_s = sites.shape[0]
    # per time observation: N, n0, A, then site counts
    rec_t = np.full((n_t, 3 + n_s), np.nan)
    # per event observation: t, N, n0, A
    rec_e = np.full((n_e, 4), np.nan)

    alloc = 1024 if cap > 1024 else cap
    pos = np.zeros((alloc, d), dtype=np.int32)
    where = np.full(alloc, -1, dtype=np.int64)
    omem = np.zeros(alloc, dtype=np.int64)
    N = 1
    n0 = 1
    where[0] = 0
    omem[0] = 0
    t = 0.0
    A = 0.0
    A_c = 0.0
    nev = 0
    io = 0
    ie = 0
    status = 0
    counts = np.zeros(n_s)
    while ie < n_e and obs_ev[ie] == 0:
        rec_e[ie, 0] = 0.0
        rec_e[ie, 1] = 1.0
        rec_e[ie, 2] = 1.0
        rec_e[ie, 3] = 0.0
        ie += 1
    one_lam = 1.0 + lam
    while True:
        rate = N * one_lam + eps * n0
        rho = lam + eps * n0 / N
        dt = rng.standard_exponential() / rate
        t_next = t + dt
        while io < n_t and obs_t[io] <= t_next and obs_t[io] <= t_max:
            rec_t[io, 0] = N
            rec_t[io, 1] = n0
            rec_t[io, 2] = (A + rho * (obs_t[io] - t)) - A_c
            if n_s > 0:
                _count_sites(pos, N, sites, counts)
                for j in range(n_s):
                    rec_t[io, 3 + j] = counts[j]
            io += 1
        if t_next > t_max:
            y = rho * (t_max - t) - A_c
            s = A + y
            A_c = (s - A) - y
            A = s
            t = t_max
            break
        y = rho * dt - A_c
        s = A + y
        A_c = (s - A) - y
        A = s
        t = t_next

        U = rng.random() * rate
        base = N * one_lam
        jump = False
        if U < base:
            i = int(U / one_lam)
            if i >= N:
                i = N - 1
            jump = (U - i * one_lam) < 1.0
        else:
            k = int((U - base) / eps)
            if k >= n0:
                k = n0 - 1
            i = omem[k]
        if jump:
            direction = rng.integers(0, 2 * d)
            axis = direction // 2
            step = 1 - 2 * (direction % 2)
            pos[i, axis] += step
            if where[i] >= 0:
                slot = where[i]
                last = omem[n0 - 1]
                omem[slot] = last
                where[last] = slot
                where[i] = -1
                n0 -= 1
            else:
                at0 = True
                for a in range(d):
                    if pos[i, a] != 0:
                        at0 = False
                        break
                if at0:
                    where[i] = n0
                    omem[n0] = i
                    n0 += 1
        else:
            if N >= cap:
                status = 1
                break
            if N == alloc:
                new_alloc = 2 * alloc
                if new_alloc > cap:
                    new_alloc = cap
                pos2 = np.zeros((new_alloc, d), dtype=np.int32)
                pos2[:alloc] = pos
                pos = pos2
                w2 = np.full(new_alloc, -1, dtype=np.int64)
                w2[:alloc] = where
                where = w2
                o2 = np.zeros(new_alloc, dtype=np.int64)
                o2[:alloc] = omem
                omem = o2
                alloc = new_alloc
            for a in range(d):
                pos[N, a] = pos[i, a]
            where[N] = -1
            if where[i] >= 0:
                where[N] = n0
                omem[n0] = N
                n0 += 1
            N += 1
        nev += 1
        if debug:
            c0 = 0
            for j in range(N):
                z = True
                for a in range(d):
                    if pos[j, a] != 0:
                        z = False
                        break
                if z:
                    c0 += 1
                    if where[j] < 0 or omem[where[j]] != j:
                        raise AssertionError("origin index out of sync")
            if c0 != n0:
                raise AssertionError("cached origin count differs from recount")
            recount = 0.0
            for j in range(N):
                recount += one_lam + (eps if where[j] >= 0 else 0.0)
            fresh = N * one_lam + eps * n0
            if abs(recount - fresh) > 1e-9 * fresh:
                raise AssertionError("cached rate differs from recount")
        while ie < n_e and obs_ev[ie] == nev:
            rec_e[ie, 0] = t
            rec_e[ie, 1] = N
            rec_e[ie, 2] = n0
            rec_e[ie, 3] = A - A_c
            ie += 1
        if nev >= max_events:
            break
    return rec_t, rec_e, status, t, nev, N, n0, A - A_c


# --------------------------------------------------------------------------
# public interface


@dataclass(frozen=True)
class SimConfig:
    """Configuration of a simulation run.

    ``t_max`` is the time horizon; ``max_events`` optionally stops the run
    after that many events (for embedded-chain observations). Either way
    the run ends with status ``horizon_reached`` unless it exceeds
    ``particle_cap`` first.
    """

    params: ModelParams
    t_max: float
    particle_cap: int = DEFAULT_CAP
    seed: int = 0
    observe_at: tuple = ()
    observe_sites: tuple = ()
    observe_events: tuple = ()
    max_events: int | None = None
    allow_zero_lambda: bool = False

    def __post_init__(self):
        object.__setattr__(self, "observe_at", tuple(float(s) for s in self.observe_at))
        object.__setattr__(self, "observe_events", tuple(int(n) for n in self.observe_events))
        sites = tuple(tuple(int(c) for c in x) for x in self.observe_sites)
        if not sites:
            sites = (origin(self.params.d),)
        object.__setattr__(self, "observe_sites", sites)
        if self.params.lam <= 0 and not self.allow_zero_lambda:
            raise ValueError("the branching random walk requires lam > 0")
        if not self.t_max >= 0:
            raise ValueError("t_max must be nonnegative")
        if self.particle_cap < 1:
            raise ValueError("particle_cap must be >= 1")
        obs = self.observe_at
        if any(b < a for a, b in zip(obs, obs[1:])):
            raise ValueError("observe_at must be sorted")
        if obs and (obs[0] < 0 or obs[-1] > self.t_max):
            raise ValueError("observe_at must lie in [0, t_max]")
        ev = self.observe_events
        if any(b < a for a, b in zip(ev, ev[1:])) or (ev and ev[0] < 0):
            raise ValueError("observe_events must be sorted and nonnegative")
        if any(len(x) != self.params.d for x in sites):
            raise ValueError("observe_sites must have dimension d")
        if self.max_events is not None and self.max_events < 0:
            raise ValueError("max_events must be nonnegative")
        if math.isinf(self.t_max) and self.max_events is None:
            raise ValueError("an infinite t_max needs max_events")

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "t_max": self.t_max,
            "particle_cap": self.particle_cap,
            "seed": self.seed,
            "observe_at": list(self.observe_at),
            "observe_sites": [format_site(x) for x in self.observe_sites],
            "observe_events": list(self.observe_events),
            "max_events": self.max_events,
        }


@dataclass(frozen=True)
class Trajectory:
    """Observations of one run.

    Rows of the time table correspond to ``config.observe_at``; rows of the
    event table to ``config.observe_events``. Rows the run never reached
    (after a cap stop) are NaN.
    """

    config: SimConfig
    times: np.ndarray
    N: np.ndarray
    n0: np.ndarray
    site_counts: np.ndarray  # (n_obs, n_sites)
    A: np.ndarray
    status: str
    t_stop: float
    n_events: int
    final_N: int
    final_n0: int
    final_A: float
    event_index: np.ndarray = field(repr=False)
    event_t: np.ndarray = field(repr=False)
    event_N: np.ndarray = field(repr=False)
    event_n0: np.ndarray = field(repr=False)
    event_A: np.ndarray = field(repr=False)

    @property
    def pi_hat_0(self) -> np.ndarray:
        return self.n0 / self.N

    @property
    def pi_hat_sites(self) -> np.ndarray:
        return self.site_counts / self.N[:, None]

    @property
    def pi_hat_B(self) -> np.ndarray:
        """``Pi_hat_t(B)`` for the set B of observed sites."""
        return self.site_counts.sum(axis=1) / self.N

    @property
    def M(self) -> np.ndarray:
        return self.N * np.exp(-self.A)

    @property
    def rho(self) -> np.ndarray:
        p = self.config.params
        return p.lam + p.epsilon * self.pi_hat_0

    @property
    def event_pi_hat_0(self) -> np.ndarray:
        return self.event_n0 / self.event_N

    def columns(self) -> dict[str, np.ndarray]:
        cols = {"t": self.times, "N": self.N, "n0": self.n0, "pi_hat_0": self.pi_hat_0}
        for j, x in enumerate(self.config.observe_sites):
            cols[f"pi_hat[{format_site(x)}]"] = self.pi_hat_sites[:, j]
        cols["pi_hat_B"] = self.pi_hat_B
        cols["M"] = self.M
        cols["A"] = self.A
        return cols

    def rows(self) -> list[dict]:
        cols = self.columns()
        n = len(self.times)
        return [{**{k: v[i] for k, v in cols.items()}, "status": self.status} for i in range(n)]


def run(config: SimConfig, replica: int = 0, rng: np.random.Generator | None = None,
        debug: bool = False) -> Trajectory:
    """Simulate from one particle at the origin until ``t_max``, the event
    limit, or the particle cap."""
    p = config.params
    if rng is None:
        rng = replica_rng(config.seed, replica)
    obs_t = np.asarray(config.observe_at, dtype=np.float64)
    obs_e = np.asarray(config.observe_events, dtype=np.int64)
    sites = np.asarray(config.observe_sites, dtype=np.int32).reshape(-1, p.d)
    max_ev = np.iinfo(np.int64).max if config.max_events is None else int(config.max_events)
    rec_t, rec_e, status, t, nev, N, n0, A = _engine(
        rng, p.d, float(p.lam), float(p.epsilon), float(config.t_max), max_ev,
        int(config.particle_cap), obs_t, obs_e, sites, bool(debug))
    return Trajectory(
        config=config, times=obs_t, N=rec_t[:, 0], n0=rec_t[:, 1],
        site_counts=rec_t[:, 3:], A=rec_t[:, 2], status=_STATUS[status], t_stop=float(t),
        n_events=int(nev), final_N=int(N), final_n0=int(n0), final_A=float(A),
        event_index=obs_e, event_t=rec_e[:, 0], event_N=rec_e[:, 1],
        event_n0=rec_e[:, 2], event_A=rec_e[:, 3],
    )


@dataclass(frozen=True)
class ColumnStats:
    mean: np.ndarray
    var: np.ndarray
    se: np.ndarray
    count: np.ndarray


def column_stats(x: np.ndarray) -> ColumnStats:
    """NaN-aware mean, sample variance and standard error along axis 0."""
    x = np.asarray(x, dtype=float)
    ok = ~np.isnan(x)
    n = ok.sum(axis=0)
    total = np.where(ok, x, 0.0).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = total / n
        dev = np.where(ok, x - mean, 0.0)
        var = (dev ** 2).sum(axis=0) / (n - 1)
        se = np.sqrt(var / n)
    return ColumnStats(mean, var, se, n)


@dataclass(frozen=True)
class ReplicaStats:
    """Replica aggregate: ``stats[column]`` holds per-observation
    :class:`ColumnStats`; ``statuses`` counts terminal statuses."""

    config: SimConfig
    n_replicas: int
    stats: dict
    event_stats: dict
    statuses: dict
    trajectories: list = field(repr=False, default_factory=list)

    def __getitem__(self, key) -> ColumnStats:
        return self.stats[key]


def _stack(trajs, getter):
    return np.vstack([getter(tr) for tr in trajs])


def aggregate(config: SimConfig, trajs: list[Trajectory], keep: bool = False) -> ReplicaStats:
    cols = {
        "N": lambda tr: tr.N,
        "logN": lambda tr: np.log(tr.N),
        "n0": lambda tr: tr.n0,
        "pi_hat_0": lambda tr: tr.pi_hat_0,
        "pi_hat_B": lambda tr: tr.pi_hat_B,
        "M": lambda tr: tr.M,
        "M2": lambda tr: tr.M ** 2,
        "A": lambda tr: tr.A,
        "rho": lambda tr: tr.rho,
    }
    stats = {k: column_stats(_stack(trajs, g)) for k, g in cols.items()}
    for j, x in enumerate(config.observe_sites):
        stats[f"pi_hat[{format_site(x)}]"] = column_stats(_stack(trajs, lambda tr: tr.pi_hat_sites[:, j]))
    ev = {
        "t": lambda tr: tr.event_t,
        "N": lambda tr: tr.event_N,
        "pi_hat_0": lambda tr: tr.event_pi_hat_0,
    }
    event_stats = {k: column_stats(_stack(trajs, g)) for k, g in ev.items()}
    statuses: dict[str, int] = {}
    for tr in trajs:
        statuses[tr.status] = statuses.get(tr.status, 0) + 1
    return ReplicaStats(config, len(trajs), stats, event_stats, statuses, trajs if keep else [])


def run_many(config: SimConfig, n_replicas: int, threads: int = 1, debug: bool = False,
             runner=None) -> list[Trajectory]:
    """Run replicas ``0..n_replicas-1``; results are in replica order."""
    if n_replicas < 1:
        raise ValueError("n_replicas must be >= 1")
    fn = runner or run
    if threads <= 1:
        return [fn(config, r, debug=debug) for r in range(n_replicas)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda r: fn(config, r, debug=debug), range(n_replicas)))


def replicate(config: SimConfig, n_replicas: int, threads: int = 1, keep: bool = False,
              debug: bool = False) -> ReplicaStats:
    """Independent replicas aggregated column by column."""
    trajs = run_many(config, n_replicas, threads, debug)
    return aggregate(config, trajs, keep)


def growth_slope(times: np.ndarray, mean_log_n: np.ndarray, t_lo: float, t_hi: float) -> float:
    """Least-squares slope of ``mean log N_t`` over ``[t_lo, t_hi]``."""
    t = np.asarray(times)
    y = np.asarray(mean_log_n)
    sel = (t >= t_lo) & (t <= t_hi) & ~np.isnan(y)
    if sel.sum() < 2:
        raise ValueError("need at least two observation times in the window")
    return float(np.polyfit(t[sel], y[sel], 1)[0])
