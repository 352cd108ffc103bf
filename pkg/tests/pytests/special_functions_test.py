import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gammaincc, gammaln

from sparse_additive_testing.exceptions import TailUnderflow
from sparse_additive_testing.special_functions import (
    alpha_threshold, bulk_alpha_constant, chi2_logsf, chi2_sf,
    laurent_massart_threshold, log_reg_upper_gamma, reg_upper_gamma,
    sample_noncentral_chi2, temme_Q_order1, temme_terms,
    truncated_chi2_var)

"""
Tests for the chi-squared tail machinery.
"""


def test_special_values():
    """
    Asserts:
        alpha_0(2) = 4, Q(1, 1) = e^-1 and Q(2, 1) = 2 e^-1.
    """
    assert alpha_threshold(2, 0.0) == pytest.approx(4.0, abs=1e-10)
    assert reg_upper_gamma(1.0, 1.0) == pytest.approx(math.exp(-1.0), abs=1e-12)
    assert reg_upper_gamma(2.0, 1.0) == pytest.approx(2.0 * math.exp(-1.0), abs=1e-12)


def test_boundary_arguments():
    """
    Asserts:
        Q(a, 0) = 1, Q(a, inf) = 0 and bad arguments raise ValueError.
    """
    assert reg_upper_gamma(3.0, 0.0) == 1.0
    assert log_reg_upper_gamma(3.0, math.inf) == -math.inf
    with pytest.raises(ValueError):
        reg_upper_gamma(0.0, 1.0)
    with pytest.raises(ValueError):
        reg_upper_gamma(1.0, -1.0)


def test_reg_upper_gamma_matches_quadrature():
    """
    Test `reg_upper_gamma` against quadrature of the defining integral.

    Asserts:
        Relative error at most 1e-10 on 100 random (a, x) with a in [0.5, 500].
    """
    rng = np.random.default_rng(3)
    for _ in range(100):
        a = float(rng.uniform(0.5, 500.0))
        x = float(rng.uniform(0.1 * a, 2.0 * a))

        def integrand(t):
            return math.exp((a - 1.0) * math.log(t) - t - gammaln(a)) if t > 0 else 0.0

        peak = max(a - 1.0, x)
        width = 50.0 * math.sqrt(a) + 50.0
        expected, _ = quad(integrand, x, peak + width, points=[peak] if peak > x else None, epsabs=0.0, epsrel=1e-13, limit=500)
        assert reg_upper_gamma(a, x) == pytest.approx(expected, rel=1e-10)


def test_log_reg_upper_gamma_far_tail():
    """
    Asserts:
        log Q stays finite and accurate where Q itself underflows.
    """
    value = log_reg_upper_gamma(2.0, 2000.0)
    expected = math.log(2001.0) - 2000.0
    assert value == pytest.approx(expected, rel=1e-12)
    assert chi2_logsf(4, 4000.0) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize('d, x', [(1, 0.5), (2, 3.0), (7, 12.0), (40, 35.0)])
def test_chi2_sf_matches_scipy(d, x):
    """
    Asserts:
        chi2_sf agrees with scipy's gammaincc.
    """
    assert chi2_sf(d, x) == pytest.approx(float(gammaincc(d / 2, x / 2)), rel=1e-12)


@pytest.mark.parametrize('a', [25.0, 50.0, 100.0, 400.0])
def test_temme_envelope(a):
    """
    Test `temme_Q_order1` across the transition region.

    Asserts:
        |Q - approximation| <= 10 x envelope for mu in [-0.9, 3].
    """
    for mu in np.linspace(-0.9, 3.0, 20):
        x = a * (1.0 + mu)
        approx, envelope = temme_Q_order1(a, x)
        assert abs(reg_upper_gamma(a, x) - approx) <= 10.0 * envelope


def test_temme_coefficient_near_transition():
    """
    Asserts:
        The leading coefficient tends to -1/3 at x = a and is continuous across the series switch.
    """
    assert temme_terms(50.0, 50.0).c0 == pytest.approx(-1.0 / 3.0, abs=1e-12)
    below = temme_terms(50.0, 50.0 * (1 + 0.99e-4)).c0
    above = temme_terms(50.0, 50.0 * (1 + 1.01e-4)).c0
    assert below == pytest.approx(above, abs=1e-6)


def test_alpha_threshold_exceeds_cutoff():
    """
    Asserts:
        The conditional mean lies above the cutoff d + r^2 and the variance is positive.
    """
    for d, r in [(2, 1.0), (8, 3.0), (32, 2.0), (64, 10.0)]:
        assert alpha_threshold(d, r) > d + r * r
        assert truncated_chi2_var(d, r) > 0


def test_alpha_threshold_far_tail():
    """
    Asserts:
        Far in the tail the conditional mean approaches the cutoff plus 2.
    """
    d, r = 4, 40.0
    assert alpha_threshold(d, r) == pytest.approx(d + r * r + 2.0, rel=1e-2)


def test_tail_underflow_raised():
    """
    Asserts:
        A cutoff beyond every representable tail raises TailUnderflow.
    """
    with pytest.raises(TailUnderflow):
        alpha_threshold(2, 1e200)


def test_alpha_threshold_matches_monte_carlo():
    """
    Asserts:
        alpha_r(d) agrees with the simulated conditional mean.
    """
    rng = np.random.default_rng(11)
    d, r = 8, 2.0
    draws = rng.chisquare(d, size=400_000)
    tail = draws[draws >= d + r * r]
    se = tail.std() / math.sqrt(tail.size)
    assert abs(tail.mean() - alpha_threshold(d, r)) <= 4 * se


@pytest.mark.parametrize('d, x', [(1, 1.0), (5, 0.5), (10, 3.0)])
def test_laurent_massart_threshold(d, x):
    """
    Asserts:
        The level is d + 2 sqrt(d x) + 2x and its tail is below e^-x.
    """
    level = laurent_massart_threshold(d, x)
    assert level == pytest.approx(d + 2 * math.sqrt(d * x) + 2 * x)
    assert chi2_sf(d, level) <= math.exp(-x)
    with pytest.raises(ValueError):
        laurent_massart_threshold(d, 0.0)


def test_bulk_alpha_constant_is_bounded():
    """
    Asserts:
        (alpha_t(d) - d) / (beta sqrt d) stays below 10 for 1 <= beta <= sqrt d, d >= 64.
    """
    for d in (64, 256, 1024):
        for beta in np.linspace(1.0, math.sqrt(d), 6):
            assert 0 < bulk_alpha_constant(d, float(beta)) <= 10.0


def test_sample_noncentral_chi2_moments():
    """
    Asserts:
        The sample mean is close to d + lambda.
    """
    rng = np.random.default_rng(5)
    draws = sample_noncentral_chi2(6, 4.0, rng, size=200_000)
    assert draws.mean() == pytest.approx(10.0, abs=0.1)
    assert isinstance(sample_noncentral_chi2(6, 4.0, rng), float)
