"""Killed jump process and its quasi-stationary distribution.

The process ``Y`` runs the urn's mean kernel ``Q`` in continuous time with
generator ``kappa (Q - I)``; ``1 - Q_x(Z^d)`` becomes a killing rate. On a
truncated box, jumps that would leave the box are turned into killing too.
The quasi-stationary law ``nu`` of ``Y``, pushed through the mean
replacement kernel, gives the limit of the normalised occupation measure.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .lattice import BoxIndex, SparseMeasure, norm_l1
from .mvpp import kappa, mean_kernel_Q
from .params import ModelParams

QSD_TOL = 1e-12


class ConvergenceError(RuntimeError):
    pass


class NegativeLimitMass(RuntimeError):
    pass


class OutsideHypothesisWarning(UserWarning):
    pass


@dataclass(frozen=True)
class KilledGenerator:
    """Rates of ``Y`` on a box.

    ``jump_rates[i, j]`` is the rate from site ``i`` to its ``j``-th
    neighbour (in :func:`catbrw.lattice.neighbors` order), zero when that
    neighbour is outside the box. ``death_rates`` includes the rate of such
    exits, which is also reported separately as ``exit_rates``.
    """

    params: ModelParams
    box: BoxIndex
    jump_rates: np.ndarray = field(repr=False)
    death_rates: np.ndarray = field(repr=False)
    exit_rates: np.ndarray = field(repr=False)
    total_rate: np.ndarray = field(repr=False)

    def matrix(self) -> sparse.csr_matrix:
        """Sparse generator ``L`` acting on row vectors (``nu L``)."""
        nb = self.box.neighbor_table
        n, m = nb.shape
        rows = np.repeat(np.arange(n), m)
        cols = nb.ravel()
        vals = self.jump_rates.ravel()
        ok = cols >= 0
        rows = np.concatenate([rows[ok], np.arange(n)])
        cols = np.concatenate([cols[ok], np.arange(n)])
        vals = np.concatenate([vals[ok], -self.total_rate])
        return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _table_death(params: ModelParams) -> tuple[float, float, float]:
    eps, lam, l0, d = params.epsilon, params.lam, params.lambda0, params.d
    return (0.0,
            eps * (1.0 - 1.0 / (1.0 + l0) - 1.0 / (2 * d * (1.0 + lam))),
            eps * (1.0 - 1.0 / (1.0 + l0)))


def build_Y_generator(params: ModelParams, box: BoxIndex, check_coupling: bool = True) -> KilledGenerator:
    """Assemble the killed generator from its closed-form rate table.

    With ``check_coupling`` the rows for ``|x|_1 <= 3`` are compared with
    ``kappa (Q - I)`` built directly from the mean kernel.
    """
    if not params.lambda0 > params.lam > 0:
        raise ValueError("need lambda0 > lam > 0")
    if box.radius < 2:
        raise ValueError("box radius must be at least 2")
    if box.dim != params.d:
        raise ValueError("box dimension does not match params.d")
    if params.lambda0 <= params.localisation_threshold:
        warnings.warn("lambda0 <= 2d - 1 + 2d lam: the urn route to the limit is not certified "
                      "for these parameters", OutsideHypothesisWarning, stacklevel=2)
    d, lam, l0, eps = params.d, params.lam, params.lambda0, params.epsilon
    nb = box.neighbor_table
    l1 = box.l1
    n = box.size
    two_d = 2 * d
    jumps = np.full((n, two_d), 1.0 / two_d)
    o = box.origin_index
    jumps[o, :] = (1.0 + lam) / ((1.0 + l0) * two_d)
    # unit sites: the neighbour that is the origin gets the surcharge
    extra = eps / (two_d * (1.0 + lam))
    jumps[nb == o] += extra
    death0, death1, death_far = _table_death(params)
    death = np.where(l1 == 0, death0, np.where(l1 == 1, death1, death_far))
    outside = nb < 0
    exits = np.where(outside, jumps, 0.0).sum(axis=1)
    jumps = np.where(outside, 0.0, jumps)
    death = death + exits
    total = jumps.sum(axis=1) + death
    gen = KilledGenerator(params, box, jumps, death, exits, total)
    if check_coupling:
        _check_against_Q(gen)
    return gen


def _check_against_Q(gen: KilledGenerator, max_l1: int = 3, tol: float = 1e-12):
    p, box = gen.params, gen.box
    k = kappa(p)
    nb = box.neighbor_table
    for i in np.flatnonzero(box.l1 <= min(max_l1, box.radius - 1)):
        x = tuple(int(c) for c in box.coords[i])
        Q = mean_kernel_Q(x, p)
        for j, y_idx in enumerate(nb[i]):
            y = box.decode(int(y_idx))
            if abs(k * Q[y] - gen.jump_rates[i, j]) > tol:
                raise AssertionError(f"jump rate {x}->{y} differs from kappa Q")
        diag = k * (Q[x] - 1.0)
        if abs(diag + gen.total_rate[i]) > tol:
            raise AssertionError(f"diagonal at {x} differs from kappa (Q - I)")
        kill = k * (1.0 - Q.total())
        if abs(kill - gen.death_rates[i]) > tol:
            raise AssertionError(f"death rate at {x} differs from kappa (1 - Q(Z^d))")


def build_X_generator(params: ModelParams, box: BoxIndex) -> sparse.csr_matrix:
    """``Q - I`` on the box, assembled site by site from
    :func:`catbrw.mvpp.mean_kernel_Q`; mass leaving the box is killed."""
    rows, cols, vals = [], [], []
    for i, x in enumerate(box.sites()):
        Q = mean_kernel_Q(x, params)
        diag = -1.0
        for y, v in Q.items():
            if y == x:
                diag += v
            elif box.contains(y):
                rows.append(i)
                cols.append(box.encode(y))
                vals.append(v)
        rows.append(i)
        cols.append(i)
        vals.append(diag)
    n = box.size
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


@dataclass(frozen=True)
class QsdSolution:
    box: BoxIndex
    values: np.ndarray = field(repr=False)
    decay_theta: float
    residual: float
    iterations: int
    limit_values: np.ndarray | None = field(default=None, repr=False)

    @property
    def nu_qsd(self) -> SparseMeasure:
        return SparseMeasure.from_box(self.box, self.values)

    @property
    def limit_measure(self) -> SparseMeasure | None:
        if self.limit_values is None:
            return None
        return SparseMeasure.from_box(self.box, self.limit_values)


def principal_left_vector(L: sparse.spmatrix, tol: float = QSD_TOL, max_iter: int = 2_000_000,
                          start: np.ndarray | None = None) -> tuple[np.ndarray, float, float, int]:
    """Power iteration ``nu <- nu (I + delta L)`` renormalised to mass 1,
    with ``delta = 1 / (2 max_x |L_xx|)``.

    Returns ``(nu, theta, residual, iterations)`` where ``theta`` is the
    mass-loss rate ``-(nu L) 1`` and ``residual = ||nu L + theta nu||_inf``.
    """
    LT = sparse.csr_matrix(L.T)
    n = L.shape[0]
    delta = 1.0 / (2.0 * float(np.abs(L.diagonal()).max()))
    nu = np.full(n, 1.0 / n) if start is None else np.asarray(start, dtype=float) / np.sum(start)
    res = np.inf
    theta = 0.0
    for it in range(1, max_iter + 1):
        g = LT @ nu
        theta = -g.sum()
        if it % 20 == 0 or it == 1:
            res = float(np.abs(g + theta * nu).max())
            if res <= tol:
                return nu, float(theta), res, it
        nu = nu + delta * g
        s = nu.sum()
        nu /= s
    raise ConvergenceError(f"power iteration stopped at residual {res:.3e} after {max_iter} steps")


def qsd_power_iteration(gen: KilledGenerator, tol: float = QSD_TOL, max_iter: int = 2_000_000) -> QsdSolution:
    """Quasi-stationary distribution of ``Y`` on the box."""
    nu, theta, res, it = principal_left_vector(gen.matrix(), tol, max_iter)
    if np.any(nu < -tol):
        raise ConvergenceError("power iteration produced negative mass")
    nu = np.clip(nu, 0.0, None)
    nu /= nu.sum()
    return QsdSolution(gen.box, nu, theta, res, it)


def push_forward_R(values: np.ndarray, params: ModelParams, box: BoxIndex) -> np.ndarray:
    """``nu R`` on the box (mass sent outside the box is dropped)."""
    k = kappa(params)
    rates = np.where(box.l1 == 0, params.lambda0, params.lam)
    out = values * (rates - 1.0) / ((1.0 + rates) * k)
    send = values / (2 * params.d * (1.0 + rates) * k)
    nb = box.neighbor_table
    for j in range(nb.shape[1]):
        ok = nb[:, j] >= 0
        np.add.at(out, nb[ok, j], send[ok])
    return out


def limit_measure(sol: QsdSolution, params: ModelParams, neg_tol: float = 1e-10) -> QsdSolution:
    """Attach ``nu R / nu R(Z^d)`` to ``sol``.

    Raises ``NegativeLimitMass`` if ``nu R`` has an atom below
    ``-neg_tol``; smaller negative atoms (rounding) are set to zero.
    """
    raw = push_forward_R(sol.values, params, sol.box)
    if raw.min() < -neg_tol:
        raise NegativeLimitMass(f"nu R has mass {raw.min():.3e} at some site")
    raw = np.clip(raw, 0.0, None)
    return QsdSolution(sol.box, sol.values, sol.decay_theta, sol.residual, sol.iterations,
                       raw / raw.sum())


def solve_qsd(params: ModelParams, radius: int = 40, tol: float = QSD_TOL) -> QsdSolution:
    """Generator, QSD and limit measure in one call."""
    gen = build_Y_generator(params, BoxIndex(radius, params.d))
    return limit_measure(qsd_power_iteration(gen, tol), params)


def restrict(values: np.ndarray, box: BoxIndex, radius: int) -> SparseMeasure:
    """The part of a box vector on ``|x|_inf <= radius``."""
    sel = box.linf <= radius
    coords = box.coords[sel]
    return SparseMeasure({tuple(int(c) for c in row): float(v)
                          for row, v in zip(coords, values[sel])})


def death_rate_table(params: ModelParams) -> dict:
    d0, d1, dfar = _table_death(params)
    return {"origin": d0, "unit": d1, "far": dfar}


__all__ = [
    "KilledGenerator", "QsdSolution", "build_Y_generator", "build_X_generator",
    "qsd_power_iteration", "limit_measure", "solve_qsd", "push_forward_R",
    "principal_left_vector", "restrict", "death_rate_table", "norm_l1",
]
