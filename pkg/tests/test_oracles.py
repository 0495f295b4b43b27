"""Oracles against each other and against the library, values frozen."""
import math
from fractions import Fraction

import numpy as np
import pytest

import oracles
from catbrw import walk


def test_one_dim_enumeration_frozen():
    f = oracles.first_return_enumeration(1, 8)
    assert f == [0, 0, Fraction(1, 2), 0, Fraction(1, 8), 0, Fraction(1, 16), 0, Fraction(5, 128)]


def test_cubic_enumeration_frozen():
    f = oracles.first_return_enumeration(3, 6)
    assert f[1] == f[3] == f[5] == 0
    assert f[2] == Fraction(1, 6)
    assert f[4] == Fraction(1, 24)
    assert f[6] == Fraction(83, 3888)


def test_one_dim_closed_form_matches_enumeration():
    f = oracles.first_return_enumeration(1, 8)
    for n in range(9):
        assert oracles.one_dim_first_return(n) == pytest.approx(float(f[n]), abs=1e-15)


def test_site_dp_matches_closed_walk_count():
    dp = oracles.site_distribution_dp(3, 16)
    cw = oracles.cubic_closed_walk_probabilities(8)
    np.testing.assert_allclose(dp[::2], cw, rtol=1e-12)
    assert np.all(dp[1::2] == 0)
    assert dp[4] == pytest.approx(0.0694444444, abs=1e-9)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_library_return_probabilities_match_site_dp(d):
    n = 24 if d < 3 else 14
    dp = oracles.site_distribution_dp(d, n)
    p = walk.return_probabilities(d, n)
    np.testing.assert_allclose(p, dp, rtol=1e-11, atol=1e-16)


@pytest.mark.parametrize("d, n", [(1, 8), (2, 8), (3, 6)])
def test_library_pmf_matches_enumeration(d, n):
    exact = oracles.first_return_enumeration(d, n)
    pmf = walk.return_time_pmf(d, 40)
    np.testing.assert_allclose(pmf.pmf[: n + 1], [float(x) for x in exact], atol=1e-15)


def test_gamma3_series_frozen():
    g = oracles.gamma3_green_series(4000)
    assert g == pytest.approx(0.6594629, abs=2e-7)
    # doubling the horizon moves the value by less than the acceptance tolerance
    assert abs(oracles.gamma3_green_series(2000) - g) < 1e-6


def test_one_dim_profile_frozen():
    nu = oracles.one_dim_nu(1.8, [0, 1, 2])
    np.testing.assert_allclose(nu, [0.588403349, 0.1524706, 0.0395091], rtol=1e-6)
    assert oracles.one_dim_nu(1.0, 0) == pytest.approx(math.sqrt(2) - 1, abs=1e-15)


def test_heat_kernel_small_time():
    # P(X(t) = 0) = 1 - t + O(t^2) for any d
    for d in (1, 2, 3):
        assert oracles.continuous_heat_kernel_origin(d, 1e-4) == pytest.approx(1 - 1e-4, abs=1e-8)
