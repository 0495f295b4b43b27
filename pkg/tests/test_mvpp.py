import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from catbrw.brw import replica_rng
from catbrw.mvpp import (NegativeMass, constant_c, constants_audit, kappa, mean_kernel_Q,
                         mean_kernel_R, mvpp_run, q_total, q_total_argmax, q_total_table,
                         rho1, rho2, sample_replacement)
from catbrw.params import ModelParams

BASE = ModelParams(1, 0.2, 2.0)

params_st = st.builds(
    lambda d, lam, extra: ModelParams(d, lam, lam + extra),
    st.integers(1, 4), st.floats(0.01, 3.0), st.floats(0.0, 30.0),
)


def test_kappa_examples():
    assert kappa(BASE) == pytest.approx(1.4, abs=1e-15)
    assert kappa(ModelParams(1, 0.0, 1.0)) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ValueError):
        kappa(ModelParams(1, 0.0, 0.0))


def test_q_table_examples():
    assert q_total((0,), BASE) == 1.0
    assert q_total((1,), BASE) == pytest.approx(0.95 / 1.4, abs=1e-15)
    assert q_total((-1,), BASE) == pytest.approx(0.678571428571, abs=1e-12)
    assert q_total((3,), BASE) == pytest.approx(0.2 / 1.4, abs=1e-15)


@given(params_st, st.integers(0, 3))
def test_kernel_totals_match_table(p, r):
    x = (r,) + (0,) * (p.d - 1)
    Q = mean_kernel_Q(x, p)
    assert Q.total() == pytest.approx(q_total(x, p), rel=1e-12, abs=1e-14)
    R = mean_kernel_R(x, p)
    lx = p.rate(x)
    assert R.total() == pytest.approx(lx / ((1 + lx) * kappa(p)), rel=1e-12)


@pytest.mark.parametrize("x", [(0, 0), (1, 0), (2, -1)])
def test_sample_replacement_mean_matches_kernel(x):
    p = ModelParams(2, 0.3, 2.5)
    rng = replica_rng(12, 0)
    n = 100_000
    R = mean_kernel_R(x, p)
    atoms = list(R)
    vals = np.zeros((n, len(atoms)))
    index = {y: i for i, y in enumerate(atoms)}
    k = kappa(p)
    for i in range(n):
        s = sample_replacement(x, p, rng)
        assert s.total() in (pytest.approx(1 / k), pytest.approx(0.0, abs=1e-15))
        for y, v in s.items():
            vals[i, index[y]] = v
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(n)
    for y, i in index.items():
        assert abs(mean[i] - R[y]) <= 3 * se[i] + 1e-15


def test_mvpp_run_bookkeeping():
    out = mvpp_run(BASE, 5000, seed=1, record=(1, 10, 100, 1000, 5000))
    k = kappa(BASE)
    np.testing.assert_allclose(out.total_mass, (1 + out.branch_count) / k, rtol=1e-14)
    assert np.all((0 <= out.origin_fraction) & (out.origin_fraction <= 1))
    st_ = out.final
    assert all(isinstance(c, int) and c > 0 for c in st_.counts.values())
    assert sum(st_.counts.values()) == 1 + out.branch_count[-1]
    assert st_.m.total() == pytest.approx(out.total_mass[-1], rel=1e-14)
    w = sum(c * (1 + BASE.rate(x)) for x, c in st_.counts.items()) / k
    assert st_.weight_total == pytest.approx(w, rel=1e-14)
    assert np.all(np.diff(out.branch_count) >= 0)


def test_mvpp_initial_state_and_determinism():
    a = mvpp_run(BASE, 1, seed=3, record=(1,))
    k = kappa(BASE)
    assert a.total_mass[0] in (pytest.approx(1 / k), pytest.approx(2 / k))
    b = mvpp_run(BASE, 300, seed=3, replica=4)
    c = mvpp_run(BASE, 300, seed=3, replica=4)
    np.testing.assert_array_equal(b.origin_fraction, c.origin_fraction)
    with pytest.raises(ValueError):
        mvpp_run(ModelParams(1, 0.0, 2.0), 10)
    assert issubclass(NegativeMass, RuntimeError)


def test_running_q_average_tracks_visits():
    out = mvpp_run(BASE, 2000, seed=7, record=(2000,))
    at0, at1, far = (v / kappa(BASE) for v in q_total_table(BASE))
    assert far <= out.q_running_mean[0] <= at0


def test_audit_examples():
    r = constants_audit(BASE)
    assert r.kappa == pytest.approx(1.4, abs=1e-15)
    assert r.c == pytest.approx(1 / 7 + (6 / 7) * (4 / 9), abs=1e-15)
    assert r.rho1 == pytest.approx(1.2, abs=1e-15)
    assert r.rho2 == pytest.approx(0.95, abs=1e-15)
    assert all(r.checks.values()) and r.hypothesis
    low = constants_audit(ModelParams(1, 0.2, 1.3))
    assert low.rho1 == pytest.approx(0.62174, abs=1e-5)
    assert low.rho2 == pytest.approx(0.66341, abs=1e-5)
    assert low.checks["rho2_lt_rho1"] is False and not low.hypothesis
    d = r.to_dict()
    assert d["checks"] == r.checks and d["params"]["lambda0"] == 2.0


def test_audit_without_catalysis():
    p = ModelParams(2, 0.5, 0.5)
    r = constants_audit(p)
    assert r.rho1 == 0.0
    assert r.rho2 == pytest.approx(3 / 4)
    assert r.rho1 == pytest.approx(r.rho2 - 3 / 4)
    assert not r.hypothesis
    assert math.isnan(constant_c(p))
    with pytest.raises(ValueError):
        constants_audit(ModelParams(1, 0.0, 2.0))


def test_check_equivalence_on_random_grid():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        d = int(rng.integers(1, 4))
        lam = float(rng.uniform(0.01, 2.0))
        l0 = lam + float(rng.uniform(0.0, 4 * d * (1 + lam)))
        r = constants_audit(ModelParams(d, lam, l0))
        assert r.checks["rho2_lt_rho1"] == r.checks["eta2_lt_kappa_minus_lambda"] == r.hypothesis


@given(params_st)
def test_kappa_minus_lambda_is_rho1(p):
    assert kappa(p) - p.lam == pytest.approx(rho1(p), rel=1e-12, abs=1e-12)


@given(params_st)
def test_q_argmax_trichotomy(p):
    at0, at1, far = q_total_table(p)
    assert far <= at1
    assert q_total_argmax(p) == ("origin" if at0 >= at1 else "unit")
    # the localisation hypothesis forces the origin row to dominate
    if p.lambda0 > p.localisation_threshold:
        assert q_total_argmax(p) == "origin"
        assert max(q_total((0,) * p.d, p), q_total((1,) + (0,) * (p.d - 1), p)) == 1.0


def test_origin_can_dominate_below_threshold():
    # the converse fails: at lambda0 = 1.3 < 1.4 the origin row still wins
    p = ModelParams(1, 0.2, 1.3)
    assert not p.lambda0 > p.localisation_threshold
    assert q_total_argmax(p) == "origin"
    # and for small enough lambda0 the unit row takes over
    assert q_total_argmax(ModelParams(1, 0.2, 0.5)) == "unit"


def test_rho2_formula():
    p = ModelParams(3, 0.1, 9.0)
    eps = 8.9
    assert rho2(p) == pytest.approx(eps * (1 - 1 / 10 - 1 / (6 * 1.1)) + 5 / 6, rel=1e-14)
