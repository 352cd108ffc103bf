import math
from dataclasses import dataclass
from typing import Callable, List

import numpy as np
from scipy.special import gammaincc

from sparse_additive_testing.kernel_spectra import (ExpDecayProfile,
                                                    FiniteRankProfile,
                                                    SobolevProfile,
                                                    validate_profile)
from sparse_additive_testing.logging import stdout_logger
from sparse_additive_testing.priors_divergence import (MinimaxPrior,
                                                       TrivialPrior,
                                                       chi2_divergence_bound,
                                                       chi2_divergence_exact,
                                                       minimax_prior_c,
                                                       trivial_prior_c)
from sparse_additive_testing.rate_calculus import (A_H, ProblemDims, gamma_H,
                                                   gamma_H_bruteforce,
                                                   grid_V, grid_V_exhaustive,
                                                   minimax_rate, nu_H)
from sparse_additive_testing.special_functions import (alpha_threshold,
                                                       chi2_sf,
                                                       laurent_massart_threshold,
                                                       reg_upper_gamma,
                                                       temme_Q_order1)

"""
Fast property checks run by the `selfcheck` subcommand.
"""

SELFCHECK_SEED = 20240521


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ''


CHECKS: List[Callable[[np.random.Generator], CheckResult]] = []


def check(func: Callable[[np.random.Generator], CheckResult]) -> Callable[[np.random.Generator], CheckResult]:
    CHECKS.append(func)
    return func


def _random_profile(rng: np.random.Generator):
    choice = rng.integers(0, 3)
    if choice == 0:
        return SobolevProfile(float(rng.uniform(0.3, 3.0)))
    if choice == 1:
        return FiniteRankProfile(int(rng.integers(1, 30)))
    return ExpDecayProfile(float(rng.uniform(0.05, 1.0)), float(rng.uniform(0.5, 1.5)))


def _random_dims(rng: np.random.Generator) -> ProblemDims:
    while True:
        p = int(rng.integers(1, 10 ** 5))
        s = int(rng.integers(1, p + 1))
        n = float(10 ** rng.uniform(0.5, 6))
        dims = ProblemDims(p, s, n)
        if dims.nontrivial:
            return dims


@check
def special_values(rng: np.random.Generator) -> CheckResult:
    errors = [abs(alpha_threshold(2, 0.0) - 4.0),
              abs(reg_upper_gamma(1.0, 1.0) - math.exp(-1.0)),
              abs(reg_upper_gamma(2.0, 1.0) - 2.0 * math.exp(-1.0))]
    return CheckResult('special_values', max(errors) <= 1e-10, f'max error {max(errors):.3g}')


@check
def incomplete_gamma_oracle(rng: np.random.Generator) -> CheckResult:
    worst = 0.0
    for _ in range(100):
        a = float(rng.uniform(0.5, 500.0))
        x = float(rng.uniform(0.0, 2.0 * a + 20.0))
        expected = float(gammaincc(a, x))
        if expected < 1e-280:
            continue
        worst = max(worst, abs(reg_upper_gamma(a, x) - expected) / expected)
    return CheckResult('incomplete_gamma_oracle', worst <= 1e-10, f'max relative error {worst:.3g}')


@check
def temme_envelope(rng: np.random.Generator) -> CheckResult:
    worst = 0.0
    for a in (25.0, 50.0, 100.0, 400.0):
        for mu in np.linspace(-0.9, 3.0, 20):
            x = a * (1.0 + mu)
            approx, envelope = temme_Q_order1(a, x)
            if envelope == 0.0:
                continue
            worst = max(worst, abs(reg_upper_gamma(a, x) - approx) / envelope)
    return CheckResult('temme_envelope', worst <= 10.0, f'max error / envelope {worst:.3g}')


@check
def tail_inequalities(rng: np.random.Generator) -> CheckResult:
    failures = 0
    for d in (3, 8, 30, 100):
        for t in np.linspace(d, 6 * d, 12):
            density = math.exp((d / 2 - 1) * math.log(t) - t / 2 - (d / 2) * math.log(2.0) - math.lgamma(d / 2))
            if 2 * density > chi2_sf(d, t) * (1 + 1e-12):
                failures += 1
            gap = chi2_sf(d + 2, t) - chi2_sf(d, t)
            identity = math.exp(-t / 2 + (d / 2) * math.log(t) - (d / 2) * math.log(2.0) - math.lgamma(d / 2 + 1))
            if abs(gap - identity) > 1e-10:
                failures += 1
    return CheckResult('tail_inequalities', failures == 0, f'{failures} violations')


@check
def rate_oracles(rng: np.random.Generator) -> CheckResult:
    failures = 0
    for _ in range(500):
        profile, dims = _random_profile(rng), _random_dims(rng)
        nu = nu_H(profile, dims)
        closed = gamma_H(profile, dims, nu)
        brute = gamma_H_bruteforce(profile, dims, 4 * nu)
        if abs(closed - brute) > 1e-12 * brute:
            failures += 1
        middle = math.sqrt(nu * dims.log_term) / dims.n
        if not closed <= middle * (1 + 1e-12) or not middle <= math.sqrt(2.0) * closed * (1 + 1e-12):
            failures += 1
    return CheckResult('rate_oracles', failures == 0, f'{failures} violations over 500 configs')


@check
def sobolev_exponent(rng: np.random.Generator) -> CheckResult:
    slopes = []
    for alpha in (0.5, 1.0, 2.0):
        ns = 2.0 ** np.arange(10, 23)
        rates = [minimax_rate(SobolevProfile(alpha), ProblemDims(10 ** 4, 200, n)).eps_sq for n in ns]
        slope = np.polyfit(np.log(ns), np.log(rates), 1)[0]
        slopes.append(abs(slope + 4 * alpha / (4 * alpha + 1)))
    return CheckResult('sobolev_exponent', max(slopes) <= 0.05, f'max slope deviation {max(slopes):.3g}')


@check
def profiles_monotone(rng: np.random.Generator) -> CheckResult:
    profiles = [SobolevProfile(0.5), SobolevProfile(2.0), FiniteRankProfile(7), ExpDecayProfile(0.5, 1.0)]
    invalid = [repr(profile) for profile in profiles if not validate_profile(profile, 10 ** 4).valid]
    return CheckResult('profiles_monotone', not invalid, ', '.join(invalid))


@check
def adaptation_sandwich(rng: np.random.Generator) -> CheckResult:
    failures = 0
    for _ in range(12):
        p = int(rng.integers(16, 5000))
        profile = _random_profile(rng)
        n = float(10 ** rng.uniform(2, 5))
        if math.log1p(p * math.log(math.e * p)) > n / 2:
            continue
        report = A_H(profile, p, n)
        size = math.log(math.e * len(report.V_H))
        if not report.a_star <= size * (1 + 1e-9) or not size <= 2 * report.a_star * (1 + 1e-9):
            failures += 1
        if p <= 1000 and grid_V(profile, p, n) != grid_V_exhaustive(profile, p, n):
            failures += 1
    return CheckResult('adaptation_sandwich', failures == 0, f'{failures} violations')


@check
def divergence_chain(rng: np.random.Generator) -> CheckResult:
    failures = 0
    eta = 0.3
    for _ in range(50):
        p = int(rng.integers(4, 400))
        s = int(rng.integers(1, max(2, int(math.sqrt(p)))))
        dims = ProblemDims(p, s, float(10 ** rng.uniform(1, 4)))
        if not dims.nontrivial:
            continue
        spec = TrivialPrior(dims, FiniteRankProfile(1), float(rng.uniform(0.05, 1.0)))
        if chi2_divergence_exact(spec) > chi2_divergence_bound(spec) * (1 + 1e-9) + 1e-12:
            failures += 1
    target = 4 * eta ** 2
    trivial = ProblemDims(10 ** 4, 1, 10.0)
    at_c = TrivialPrior(trivial, SobolevProfile(1.0), trivial_prior_c(eta, trivial.log_term / trivial.n))
    if chi2_divergence_exact(at_c) > target:
        failures += 1
    bulk = ProblemDims(2000, 3, 2000.0)
    if nu_H(SobolevProfile(1.0), bulk) >= 2:
        minimax = MinimaxPrior(bulk, SobolevProfile(1.0), minimax_prior_c(eta))
        if chi2_divergence_exact(minimax) > target:
            failures += 1
    return CheckResult('divergence_chain', failures == 0, f'{failures} violations')


@check
def laurent_massart_tail(rng: np.random.Generator) -> CheckResult:
    reps = 20000
    failures = 0
    for d in (1, 8, 64):
        draws = rng.chisquare(d, size=reps)
        for x in (0.5, 2.0, 5.0):
            bound = math.exp(-x)
            frequency = float(np.mean(draws >= laurent_massart_threshold(d, x)))
            if frequency > bound + 3 * math.sqrt(bound * (1 - bound) / reps):
                failures += 1
    return CheckResult('laurent_massart_tail', failures == 0, f'{failures} violations')


def run_selfcheck(seed: int = SELFCHECK_SEED) -> List[CheckResult]:
    """
    Runs every registered check.

    Parameters
    ----------
    seed : int
        Seeds the random configurations the checks draw.

    Returns
    -------
    list of CheckResult
        One result per check; a check that raises is reported as failed.
    """
    rng = np.random.default_rng(seed)
    results = []
    for func in CHECKS:
        try:
            result = func(rng)
        except Exception as e:
            stdout_logger.error(f'Check {func.__name__} raised: {e!r}')
            result = CheckResult(func.__name__, False, repr(e))
        level = 'passed' if result.passed else 'FAILED'
        stdout_logger.info(f'{result.name}: {level} {result.detail}')
        results.append(result)
    return results
