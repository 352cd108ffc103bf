import math
import sys
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import gammaln, ndtr

from sparse_additive_testing.exceptions import NonConvergence, TailUnderflow

"""
Chi-squared tail machinery: the regularized upper incomplete gamma function in log-space,
its order-1 Temme approximation, truncated chi-squared conditional moments and the
Laurent-Massart level.

scipy's `gammaincc` underflows to zero past ~1e-308, while thresholds of order log p push the
truncated moments far into the tail, so Q is evaluated here as log Q from the usual series and
continued fraction.
"""

MAX_ITERATIONS = 100_000
ACCURACY = 1.0e-15
TINY = sys.float_info.min / sys.float_info.epsilon
SERIES_SWITCH = 1.0e-4


def _log_prefactor(a: float, x: float) -> float:
    return a * math.log(x) - x - float(gammaln(a))


def _lower_series(a: float, x: float) -> float:
    """
    Returns the sum in P(a, x) = x^a e^-x / Gamma(a) * sum.
    """
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(MAX_ITERATIONS):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * ACCURACY:
            return total
    raise NonConvergence('incomplete gamma series', a, x, MAX_ITERATIONS)


def _upper_continued_fraction(a: float, x: float) -> float:
    """
    Returns h in Q(a, x) = x^a e^-x / Gamma(a) * h, by the modified Lentz method.
    """
    b = x + 1.0 - a
    c = 1.0 / TINY
    d = 1.0 / b
    h = d
    for i in range(1, MAX_ITERATIONS + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < TINY:
            d = TINY
        c = b + an / c
        if abs(c) < TINY:
            c = TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < ACCURACY:
            return h
    raise NonConvergence('incomplete gamma continued fraction', a, x, MAX_ITERATIONS)


def log_reg_upper_gamma(a: float, x: float) -> float:
    """
    Computes log Q(a, x) without underflow.

    Parameters
    ----------
    a : float
        The shape, positive.
    x : float
        The lower integration limit, nonnegative.

    Returns
    -------
    float
        log(Gamma(a, x) / Gamma(a)), at most 0.

    Raises
    ------
    ValueError
        If a <= 0 or x < 0.
    NonConvergence
        If the series or continued fraction fails to converge.
    """
    if not a > 0:
        raise ValueError(f'Gamma shape must be positive, got {a!r}.')
    if not x >= 0:
        raise ValueError(f'Gamma argument must be nonnegative, got {x!r}.')
    if x == 0:
        return 0.0
    if math.isinf(x):
        return -math.inf
    if x < a + 1.0:
        lower = math.exp(_log_prefactor(a, x)) * _lower_series(a, x)
        return math.log1p(-min(lower, 1.0))
    return _log_prefactor(a, x) + math.log(_upper_continued_fraction(a, x))


def reg_upper_gamma(a: float, x: float) -> float:
    """
    Computes Q(a, x) = Gamma(a, x) / Gamma(a).

    Examples
    --------
    >>> round(reg_upper_gamma(2.0, 1.0), 8)
    0.73575888
    """
    return math.exp(log_reg_upper_gamma(a, x))


@dataclass(frozen=True)
class TemmeTerms:
    """
    The uniform-expansion variables for Q(a, x): lambda = x/a, mu = lambda - 1 and the signed
    eta with eta^2 / 2 = mu - log(1 + mu).
    """
    a: float
    x: float
    lam: float
    mu: float
    eta: float

    @property
    def c0(self) -> float:
        """
        The leading coefficient 1/mu - 1/eta, switched to its series near mu = 0.
        """
        if abs(self.mu) < SERIES_SWITCH:
            return -1.0 / 3.0 + self.eta / 12.0 - 23.0 * self.eta ** 2 / 540.0
        return 1.0 / self.mu - 1.0 / self.eta


def temme_terms(a: float, x: float) -> TemmeTerms:
    if not a > 0:
        raise ValueError(f'Gamma shape must be positive, got {a!r}.')
    lam = x / a
    mu = lam - 1.0
    if abs(mu) < SERIES_SWITCH:
        eta = mu * (1.0 - mu / 3.0 + 7.0 * mu ** 2 / 36.0)
    elif mu <= -1.0:
        eta = -math.inf
    else:
        eta = math.copysign(math.sqrt(2.0 * (mu - math.log1p(mu))), mu)
    return TemmeTerms(a=a, x=x, lam=lam, mu=mu, eta=eta)


def temme_Q_order1(a: float, x: float) -> Tuple[float, float]:
    """
    The order-1 uniform approximation of Q(a, x) and its error envelope.

    Parameters
    ----------
    a : float
        The shape.
    x : float
        The argument.

    Returns
    -------
    tuple of float
        (approximation, envelope) where the envelope is exp(-a eta^2 / 2) / sqrt(2 pi a).
    """
    terms = temme_terms(a, x)
    if math.isinf(terms.eta):
        return 1.0, 0.0
    envelope = math.exp(-a * terms.eta ** 2 / 2.0) / math.sqrt(2.0 * math.pi * a)
    approx = float(ndtr(-terms.eta * math.sqrt(a))) + envelope * terms.c0
    return approx, envelope


def chi2_sf(d: int, x: float) -> float:
    """
    Survival function of the chi-squared law with d degrees of freedom.

    Examples
    --------
    >>> round(chi2_sf(2, 2.0), 10)
    0.3678794412
    """
    return reg_upper_gamma(d / 2.0, x / 2.0)


def chi2_logsf(d: int, x: float) -> float:
    return log_reg_upper_gamma(d / 2.0, x / 2.0)


def _log_q_ratio(d: int, r: float, shift: int) -> float:
    """
    Returns log(Q((d + shift)/2, c/2) / Q(d/2, c/2)) for c = d + r^2.
    """
    c = d + r * r
    numerator = log_reg_upper_gamma((d + shift) / 2.0, c / 2.0)
    denominator = log_reg_upper_gamma(d / 2.0, c / 2.0)
    if not (math.isfinite(numerator) and math.isfinite(denominator)):
        raise TailUnderflow(d, r)
    return numerator - denominator


def alpha_threshold(d: int, r: float) -> float:
    """
    The null conditional mean E[chi2_d | chi2_d >= d + r^2], which centers T_r(d).

    Parameters
    ----------
    d : int
        Degrees of freedom.
    r : float
        The threshold offset, so that exceedance means at least d + r^2.

    Returns
    -------
    float
        d Q((d+2)/2, c/2) / Q(d/2, c/2) with c = d + r^2.

    Examples
    --------
    >>> round(alpha_threshold(2, 0.0), 12)
    4.0
    """
    if d < 1:
        raise ValueError(f'Degrees of freedom must be at least 1, got {d}.')
    if r < 0:
        raise ValueError(f'Threshold offset must be nonnegative, got {r!r}.')
    return d * math.exp(_log_q_ratio(d, r, 2))


def truncated_chi2_second_moment(d: int, r: float) -> float:
    return d * (d + 2) * math.exp(_log_q_ratio(d, r, 4))


def truncated_chi2_var(d: int, r: float) -> float:
    """
    The null conditional variance Var(chi2_d | chi2_d >= d + r^2).
    """
    alpha = alpha_threshold(d, r)
    return max(truncated_chi2_second_moment(d, r) - alpha * alpha, 0.0)


def laurent_massart_threshold(d: int, x: float) -> float:
    """
    The level d + 2 sqrt(d x) + 2x, exceeded by chi2_d with probability at most e^-x.

    Examples
    --------
    >>> laurent_massart_threshold(1, 1.0)
    5.0
    """
    if not x > 0:
        raise ValueError(f'Laurent-Massart deviation must be positive, got {x!r}.')
    return d + 2.0 * math.sqrt(d * x) + 2.0 * x


def bulk_alpha_constant(d: int, beta: float) -> float:
    """
    Returns (alpha_t(d) - d) / (beta sqrt(d)) at t^2 = beta sqrt(d).
    """
    t = math.sqrt(beta * math.sqrt(d))
    return (alpha_threshold(d, t) - d) / (beta * math.sqrt(d))


def sample_noncentral_chi2(d: int, lam: float, rng: np.random.Generator, size: Optional[int] = None):
    """
    Draws chi2_d(lam) as a sum of d squared unit normals whose mean vector carries sqrt(lam) in
    its first coordinate.

    Parameters
    ----------
    d : int
        Degrees of freedom.
    lam : float
        The noncentrality, nonnegative.
    rng : numpy.random.Generator
        The random stream, used exclusively by this call.
    size : int, optional
        Number of draws; a single float is returned when omitted.
    """
    if d < 1 or lam < 0:
        raise ValueError(f'Need d >= 1 and lam >= 0, got d={d}, lam={lam!r}.')
    shape = (1 if size is None else size, d)
    z = rng.standard_normal(shape)
    z[:, 0] += math.sqrt(lam)
    draws = np.sum(z * z, axis=1)
    return float(draws[0]) if size is None else draws
