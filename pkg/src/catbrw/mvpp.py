"""Measure-valued Polya process view of the branching random walk.

Observed at its successive event times and scaled by ``1/kappa``, the
particle configuration is a measure-valued Polya urn: a colour ``xi`` is
drawn with probability proportional to ``(1 + lambda_x) m(x)``, and the
replacement measure ``R^(1)_xi`` is added. Branching adds an atom at
``xi``; a jump moves one atom from ``xi`` to a uniform neighbour.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .brw import replica_rng
from .lattice import Site, SparseMeasure, neighbors, norm_l1, origin
from .params import ModelParams

Q_EXPONENT = 4.0 / 3.0
A2_EXPONENTS = {"p": 4.0, "q_prime": 2.0, "r": 4.0 / 3.0}


def kappa(params: ModelParams) -> float:
    """``lambda0 - epsilon / (1 + lambda0)``, the normaliser making the
    largest mean weight increment equal to 1."""
    k = params.lambda0 - params.epsilon / (1.0 + params.lambda0)
    if not k > 0:
        raise ValueError("kappa must be positive (lambda0 = lam = 0 is excluded)")
    return k


def mean_kernel_R(x: Site, params: ModelParams) -> SparseMeasure:
    """Mean replacement measure at colour ``x``."""
    k = kappa(params)
    lx = params.rate(x)
    out = SparseMeasure({tuple(x): (lx - 1.0) / (1.0 + lx) / k})
    w = 1.0 / (2 * params.d * (1.0 + lx) * k)
    for y in neighbors(tuple(x)):
        out[y] = out[y] + w
    return out


def mean_kernel_Q(x: Site, params: ModelParams) -> SparseMeasure:
    """``Q_x = R_x P``: the mean replacement pushed through the weight
    kernel ``(1 + lambda_y) delta_y``."""
    k = kappa(params)
    lx = params.rate(x)
    out = SparseMeasure({tuple(x): (lx - 1.0) / k})
    for y in neighbors(tuple(x)):
        out[y] = out[y] + (1.0 + params.rate(y)) / (2 * params.d * (1.0 + lx) * k)
    return out


def q_total_table(params: ModelParams) -> tuple[float, float, float]:
    """``kappa Q_x(Z^d)`` at the origin, at ``|x|_1 = 1`` and beyond."""
    lam, eps, d = params.lam, params.epsilon, params.d
    return kappa(params), lam + eps / (2 * d * (1.0 + lam)), lam


def q_total(x: Site, params: ModelParams) -> float:
    """``Q_x(Z^d)`` from the three-case table."""
    at0, at1, far = q_total_table(params)
    n = norm_l1(x)
    val = at0 if n == 0 else at1 if n == 1 else far
    return val / kappa(params)


def q_total_argmax(params: ModelParams) -> str:
    """Which row of the table attains ``max_x Q_x(Z^d)``: ``"origin"`` or
    ``"unit"`` (ties resolve to the origin). The far row never wins
    strictly since ``epsilon >= 0``."""
    at0, at1, _ = q_total_table(params)
    return "origin" if at0 >= at1 else "unit"


def sample_replacement(x: Site, params: ModelParams, rng: np.random.Generator) -> SparseMeasure:
    """One draw of ``R^(1)_x = (1/kappa)((2B - 1) delta_x + (1 - B) delta_{x+D})``
    with ``B ~ Bernoulli(lambda_x / (1 + lambda_x))`` and ``D`` uniform."""
    k = kappa(params)
    lx = params.rate(x)
    b = rng.random() < lx / (1.0 + lx)
    j = int(rng.integers(0, 2 * params.d))
    x = tuple(x)
    if b:
        return SparseMeasure({x: 1.0 / k})
    y = neighbors(x)[j]
    return SparseMeasure({x: -1.0 / k, y: 1.0 / k})


@dataclass
class MvppState:
    """``m = counts / kappa`` after ``n`` draws."""

    params: ModelParams
    counts: dict
    n: int
    weight_total: float

    @property
    def m(self) -> SparseMeasure:
        k = kappa(self.params)
        return SparseMeasure({x: c / k for x, c in self.counts.items() if c})


@dataclass(frozen=True)
class MvppRun:
    """Summaries at the recorded steps."""

    params: ModelParams
    steps: np.ndarray
    origin_fraction: np.ndarray  # m_n(0) / m_n(Z^d)
    weight_per_step: np.ndarray  # m_n P(Z^d) / n
    q_running_mean: np.ndarray  # (1/n) sum_{i<=n} Q_{xi(i)}(Z^d)
    total_mass: np.ndarray  # m_n(Z^d)
    branch_count: np.ndarray
    final: MvppState = field(repr=False)


class NegativeMass(RuntimeError):
    pass


def mvpp_run(params: ModelParams, n_steps: int, seed: int = 0, replica: int = 0,
             record: tuple | None = None, rng: np.random.Generator | None = None) -> MvppRun:
    """Run the urn from ``m_0 = delta_0 / kappa`` for ``n_steps`` draws.

    Colours are drawn with the flat-array trick: every atom has weight
    ``1 + lam`` and atoms at the origin carry an extra ``epsilon``. This is
    the only place the weight kernel enters.
    """
    if params.lam <= 0:
        raise ValueError("mvpp_run requires lam > 0")
    if rng is None:
        rng = replica_rng(seed, replica)
    k = kappa(params)
    lam, eps, d = params.lam, params.epsilon, params.d
    q_vals = q_total_table(params)
    record = tuple(range(1, n_steps + 1)) if record is None else tuple(sorted(record))
    rec_set = {n: i for i, n in enumerate(record)}
    nrec = len(record)
    out = {key: np.full(nrec, np.nan) for key in ("frac", "w", "q", "mass", "br")}

    atoms: list[list[int]] = [[0] * d]
    at_origin: list[int] = [0]
    slot = [0]
    counts: dict = {origin(d): 1}
    q_sum = 0.0
    branches = 0
    for n in range(1, n_steps + 1):
        N, n0 = len(atoms), len(at_origin)
        W = N * (1.0 + lam) + eps * n0
        U = rng.random() * W
        if U < N * (1.0 + lam):
            i = min(int(U / (1.0 + lam)), N - 1)
        else:
            i = at_origin[min(int((U - N * (1.0 + lam)) / eps), n0 - 1)]
        x = tuple(atoms[i])
        ell1 = norm_l1(x)
        q_sum += q_vals[0 if ell1 == 0 else 1 if ell1 == 1 else 2] / k
        lx = params.rate(x)
        b = rng.random() < lx / (1.0 + lx)
        j = int(rng.integers(0, 2 * d))
        if b:
            atoms.append(list(x))
            slot.append(-1)
            if ell1 == 0:
                slot[-1] = len(at_origin)
                at_origin.append(len(atoms) - 1)
            counts[x] = counts.get(x, 0) + 1
            branches += 1
        else:
            axis, step = j // 2, 1 - 2 * (j % 2)
            atoms[i][axis] += step
            y = tuple(atoms[i])
            c = counts[x] - 1
            if c < 0:
                raise NegativeMass(f"negative mass at {x}")
            if c:
                counts[x] = c
            else:
                del counts[x]
            counts[y] = counts.get(y, 0) + 1
            if ell1 == 0:
                s = slot[i]
                last = at_origin.pop()
                if last != i:
                    at_origin[s] = last
                    slot[last] = s
                slot[i] = -1
            elif not any(y):
                slot[i] = len(at_origin)
                at_origin.append(i)
        r = rec_set.get(n)
        if r is not None:
            N, n0 = len(atoms), len(at_origin)
            out["frac"][r] = n0 / N
            out["w"][r] = (N * (1.0 + lam) + eps * n0) / k / n
            out["q"][r] = q_sum / n
            out["mass"][r] = N / k
            out["br"][r] = branches
    N, n0 = len(atoms), len(at_origin)
    final = MvppState(params, counts, n_steps, (N * (1.0 + lam) + eps * n0) / k)
    return MvppRun(params, np.asarray(record), out["frac"], out["w"], out["q"], out["mass"],
                   out["br"], final)


@dataclass(frozen=True)
class ConstantsReport:
    """Constants and checks of the urn-based localisation argument."""

    params: ModelParams
    kappa: float
    c: float
    theta: float
    epsilon_slack: float
    q: float
    rho1: float
    rho2: float
    eta2_upper: float
    kappa_minus_lambda: float
    checks: dict
    hypothesis: bool  # lambda0 > 2d - 1 + 2d lam
    exponents: dict

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "kappa": self.kappa,
            "c": self.c,
            "theta": self.theta,
            "epsilon_slack": self.epsilon_slack,
            "q": self.q,
            "rho1": self.rho1,
            "rho2": self.rho2,
            "eta2_upper": self.eta2_upper,
            "kappa_minus_lambda": self.kappa_minus_lambda,
            "checks": dict(self.checks),
            "hypothesis": self.hypothesis,
            "exponents": dict(self.exponents),
        }


def rho1(params: ModelParams) -> float:
    """Death rate of the killed process far from the origin."""
    return params.lambda0 * params.epsilon / (1.0 + params.lambda0)


def rho2(params: ModelParams) -> float:
    eps, d = params.epsilon, params.d
    return (eps * (1.0 - 1.0 / (1.0 + params.lambda0) - 1.0 / (2 * d * (1.0 + params.lam)))
            + (2 * d - 1) / (2 * d))


def constant_c(params: ModelParams) -> float:
    """``lam/kappa + (1 - lam/kappa)(epsilon - 1)/epsilon``; NaN at
    ``epsilon = 0``."""
    eps = params.epsilon
    if eps == 0:
        return math.nan
    a = params.lam / kappa(params)
    return a + (1.0 - a) * (eps - 1.0) / eps


def constants_audit(params: ModelParams) -> ConstantsReport:
    """Evaluate every constant and inequality of the urn argument.

    ``theta`` uses the slack ``(c kappa - lam) / 2``; when ``c kappa <= lam``
    no admissible slack exists and ``theta_lt_c`` is false.
    """
    if params.lam <= 0:
        raise ValueError("the audit requires lam > 0")
    k = kappa(params)
    c = constant_c(params)
    slack = (c * k - params.lam) / 2.0
    theta = (params.lam + slack) / k
    r1, r2 = rho1(params), rho2(params)
    checks = {
        "maxQ_at_origin": q_total_argmax(params) == "origin",
        "rho2_lt_rho1": bool(r2 < r1),
        "eta2_lt_kappa_minus_lambda": bool(r2 < k - params.lam),
        "theta_lt_c": bool(slack > 0 and theta < c),
    }
    return ConstantsReport(
        params=params, kappa=k, c=c, theta=theta, epsilon_slack=slack, q=Q_EXPONENT,
        rho1=r1, rho2=r2, eta2_upper=r2, kappa_minus_lambda=k - params.lam, checks=checks,
        hypothesis=bool(params.lambda0 > params.localisation_threshold),
        exponents=dict(A2_EXPONENTS),
    )
