import enum
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import hypergeom

from sparse_additive_testing.exceptions import (EnumerationTooLarge,
                                                InfeasibleSpec)
from sparse_additive_testing.kernel_spectra import (EigenProfile,
                                                    SobolevProfile)
from sparse_additive_testing.logging import stdout_logger
from sparse_additive_testing.rate_calculus import (A_H, AdaptationReport,
                                                   ProblemDims,
                                                   dense_sparsity_floor,
                                                   first_sparsity_above,
                                                   gamma_H, nu_H,
                                                   sobolev_dense_N,
                                                   sobolev_sparse_N)

"""
Lower-bound priors over the sparse additive parameter space and their chi-squared divergence
from the null, exact by hypergeometric overlap enumeration where the prior allows it.
"""

MAX_ENUMERATION_P = 10 ** 4
MAX_ENUMERATION_S = 10 ** 2
MEMBERSHIP_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class CoefficientMatrix:
    """
    A truncated parameter Theta with K rows of basis coefficients for each of p coordinates.

    Parameters
    ----------
    values : numpy.ndarray
        The (K, p) coefficient array.
    profile : EigenProfile
        The eigenvalue profile whose ellipsoid each column must lie in.
    s : int
        The sparsity the draw must respect.
    """
    values: np.ndarray
    profile: EigenProfile
    s: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError(f'Coefficients must be a (K, p) matrix, got shape {values.shape}.')
        if not np.all(np.isfinite(values)):
            raise ValueError('Coefficients must be finite.')
        object.__setattr__(self, 'values', values)

    @classmethod
    def zeros(cls, rows: int, p: int, profile: EigenProfile, s: int = 1) -> 'CoefficientMatrix':
        return cls(np.zeros((rows, p)), profile, s)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.values != 0, axis=0))

    @property
    def norm_sq(self) -> float:
        return math.fsum((self.values * self.values).ravel())

    def ellipsoid_sums(self) -> np.ndarray:
        """
        Per-column sums sum_k theta_{k,j}^2 / mu_k, infinite where mass sits on a zero eigenvalue.
        """
        mu = self.profile.eigenvalues(np.arange(1, self.rows + 1))[:, None]
        squares = self.values * self.values
        with np.errstate(divide='ignore', invalid='ignore'):
            ratios = np.where(squares == 0, 0.0, squares / mu)
        return np.sum(ratios, axis=0)

    def in_parameter_space(self, tol: float = MEMBERSHIP_TOLERANCE) -> bool:
        return len(self.support) <= self.s and bool(np.all(self.ellipsoid_sums() <= 1.0 + tol))

    def truncated(self, k_max: int) -> 'CoefficientMatrix':
        """
        The first k_max rows, zero-padded when the matrix is shorter.
        """
        if k_max <= self.rows:
            return CoefficientMatrix(self.values[:k_max], self.profile, self.s)
        padded = np.zeros((k_max, self.p))
        padded[:self.rows] = self.values
        return CoefficientMatrix(padded, self.profile, self.s)

    def truncation_bias(self, k_max: int) -> float:
        """
        The bound s mu_{k_max} on the norm lost by truncating a parameter-space member at k_max rows.
        """
        return self.s * self.profile.eigenvalue(k_max)


def _signs(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    return rng.integers(0, 2, size=shape) * 2.0 - 1.0


def _log_cosh(x: float) -> float:
    x = abs(x)
    return x + math.log1p(math.exp(-2.0 * x)) - math.log(2.0)


@dataclass(frozen=True)
class PriorSpec(ABC):
    """
    A base class for priors on Theta. `c` is the amplitude; with `enforce_admissible` set, c must
    respect the bound that keeps every draw inside the parameter space.
    """
    dims: ProblemDims
    profile: EigenProfile
    c: float
    enforce_admissible: bool = True

    max_c = 1.0

    def __post_init__(self):
        if self.c < 0:
            raise InfeasibleSpec(f'Prior amplitude must be nonnegative, got {self.c!r}.')
        if self.enforce_admissible and self.c > self.max_c:
            raise InfeasibleSpec(f'{type(self).__name__} needs c <= {self.max_c!r} to stay in the parameter space, got {self.c!r}.')

    @property
    @abstractmethod
    def rows(self) -> int:
        """
        Rows carrying mass in any draw.
        """
        pass

    @abstractmethod
    def sample(self, rng: np.random.Generator) -> CoefficientMatrix:
        pass

    def scaled(self, scale: float) -> 'PriorSpec':
        """
        The same prior with amplitude scale * c, no longer held to the admissibility bound.
        """
        return replace(self, c=scale * self.c, enforce_admissible=False)

    def _support(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(self.dims.p, size=size, replace=False)


class OverlapPrior(PriorSpec):
    """
    Priors whose Ingster-Suslina integrand depends on two draws only through the overlap of
    their supports, E[exp(lambda |S n S'|)].
    """

    @property
    @abstractmethod
    def support_size(self) -> int:
        pass

    @abstractmethod
    def overlap_lambda(self) -> float:
        pass


@dataclass(frozen=True)
class TrivialPrior(OverlapPrior):
    """
    A spike of height c in the first basis coefficient on a uniform support. When s >= sqrt(p)
    the support size is ceil(sqrt(p)).
    """

    @property
    def support_size(self) -> int:
        p, s = self.dims.p, self.dims.s
        return s if s < math.sqrt(p) else math.ceil(math.sqrt(p))

    @property
    def rows(self) -> int:
        return 1

    def overlap_lambda(self) -> float:
        return self.dims.n * self.c ** 2

    def sample(self, rng: np.random.Generator) -> CoefficientMatrix:
        values = np.zeros((1, self.dims.p))
        values[0, self._support(rng, self.support_size)] = self.c
        return CoefficientMatrix(values, self.profile, self.support_size)


class MinimaxCase(enum.Enum):
    BULK = 'bulk'
    SPIKE = 'spike'


@dataclass(frozen=True)
class MinimaxPrior(OverlapPrior):
    """
    Rademacher amplitudes on a uniform support of size s: +-c rho on rows k < nu_H with
    rho = sqrt(Gamma_H / nu_H) in the bulk case, +-c on row 1 in the spike case.
    """
    case: MinimaxCase = MinimaxCase.BULK

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, 'case', MinimaxCase(self.case))
        if self.case is MinimaxCase.BULK and self.nu < 2:
            raise InfeasibleSpec(f'The bulk prior needs nu_H >= 2, got nu_H={self.nu} for {self.dims}.')

    @cached_property
    def nu(self) -> int:
        return nu_H(self.profile, self.dims)

    @cached_property
    def rho(self) -> float:
        if self.case is MinimaxCase.SPIKE:
            return 1.0
        return math.sqrt(gamma_H(self.profile, self.dims, self.nu) / self.nu)

    @property
    def support_size(self) -> int:
        return self.dims.s

    @property
    def rows(self) -> int:
        return 1 if self.case is MinimaxCase.SPIKE else self.nu - 1

    def overlap_lambda(self) -> float:
        x = self.dims.n * self.c ** 2 * self.rho ** 2
        return self.rows * _log_cosh(x)

    def sample(self, rng: np.random.Generator) -> CoefficientMatrix:
        values = np.zeros((self.rows, self.dims.p))
        support = self._support(rng, self.dims.s)
        values[:, support] = self.c * self.rho * _signs(rng, (self.rows, len(support)))
        return CoefficientMatrix(values, self.profile, self.dims.s)


@dataclass(frozen=True)
class AdaptiveRung:
    v: int
    s: int
    nu: int
    rho: float


@dataclass(frozen=True)
class AdaptivePrior(PriorSpec):
    """
    Randomizes the sparsity: v uniform on tilde_V, s the smallest sparsity >= sqrt(p A) with
    v/2 < nu_H(s, A) <= v, then Rademacher +-sqrt(2) c rho_s on rows k < nu_H(s, A).

    The adaptation report and the sparsity ladder are computed once at construction and carried
    as fields, so scaled copies and unpickled priors reuse them.
    """
    adaptation: Optional[AdaptationReport] = field(default=None, compare=False, repr=False)
    ladder: Tuple[AdaptiveRung, ...] = field(default=(), compare=False, repr=False)
    max_c = 1.0 / math.sqrt(2.0)

    def __post_init__(self):
        super().__post_init__()
        if self.adaptation is None:
            object.__setattr__(self, 'adaptation', A_H(self.profile, self.dims.p, self.dims.n))
        if not self.ladder:
            object.__setattr__(self, 'ladder', self._build_ladder())

    def _build_ladder(self) -> Tuple[AdaptiveRung, ...]:
        p, n = self.dims.p, self.dims.n
        a_star = self.adaptation.a_star
        floor = dense_sparsity_floor(p, a_star)
        rungs = []
        for v in sorted(self.adaptation.tilde_V):
            s = first_sparsity_above(self.profile, p, n, a_star, floor, p, v // 2)
            dims = ProblemDims(p, s, n, a_star)
            nu = nu_H(self.profile, dims)
            rungs.append(AdaptiveRung(v, s, nu, math.sqrt(gamma_H(self.profile, dims, nu) / nu)))
        if not rungs:
            raise InfeasibleSpec(f'No sparsity s >= sqrt(p A) exists for p={p}, A={a_star!r}.')
        return tuple(rungs)

    @property
    def rows(self) -> int:
        return max(max(rung.nu - 1 for rung in self.ladder), 1)

    def sample(self, rng: np.random.Generator) -> CoefficientMatrix:
        rung = self.ladder[int(rng.integers(len(self.ladder)))]
        values = np.zeros((self.rows, self.dims.p))
        support = self._support(rng, rung.s)
        height = math.sqrt(2.0) * self.c * rung.rho
        values[:rung.nu - 1, support] = height * _signs(rng, (rung.nu - 1, len(support)))
        return CoefficientMatrix(values, self.profile, rung.s)


@dataclass(frozen=True)
class SobolevRung:
    nu: int
    alpha: float
    rho: float


@dataclass(frozen=True)
class SobolevDensePrior(PriorSpec):
    """
    Randomizes the smoothness: nu uniform on the dyadic grid between N^(2/(4 alpha1 + 1)) and
    N^(2/(4 alpha0 + 1)), alpha solving nu = N^(2/(4 alpha + 1)), then +-c rho_nu on rows k <= nu.
    """
    alpha0: float = 0.5
    alpha1: float = 2.0

    def __post_init__(self):
        super().__post_init__()
        if not 0 < self.alpha0 < self.alpha1:
            raise InfeasibleSpec(f'Need 0 < alpha0 < alpha1, got {self.alpha0!r} and {self.alpha1!r}.')

    def effective_n(self) -> float:
        return sobolev_dense_N(self.dims.p, self.dims.s, self.dims.n)

    @cached_property
    def ladder(self) -> Tuple[SobolevRung, ...]:
        big_n = self.effective_n()
        log2_n = math.log2(big_n) if big_n > 1 else 0.0
        k_lo = max(1, math.ceil(log2_n * 2.0 / (4.0 * self.alpha1 + 1.0)))
        k_hi = math.floor(log2_n * 2.0 / (4.0 * self.alpha0 + 1.0))
        rungs = []
        for k in range(k_lo, k_hi + 1):
            nu = 2 ** k
            alpha = (2.0 * math.log(big_n) / math.log(nu) - 1.0) / 4.0
            rho = big_n ** (-(2.0 * alpha + 1.0) / (4.0 * alpha + 1.0))
            rungs.append(SobolevRung(nu, alpha, rho))
        if not rungs:
            raise InfeasibleSpec(f'The smoothness grid is empty for N={big_n!r} on [{self.alpha0!r}, {self.alpha1!r}].')
        return tuple(rungs)

    @property
    def rows(self) -> int:
        return self.ladder[-1].nu

    def sample(self, rng: np.random.Generator) -> CoefficientMatrix:
        rung = self.ladder[int(rng.integers(len(self.ladder)))]
        values = np.zeros((self.rows, self.dims.p))
        support = self._support(rng, self.dims.s)
        values[:rung.nu, support] = self.c * rung.rho * _signs(rng, (rung.nu, len(support)))
        return CoefficientMatrix(values, SobolevProfile(rung.alpha), self.dims.s)


@dataclass(frozen=True)
class SobolevSparsePrior(SobolevDensePrior):
    """
    The smoothness-randomized prior in the sparse regime s < p^(1/2 - delta), with effective sample
    size n / sqrt(log(p loglog n)).
    """
    delta: float = 0.1

    def __post_init__(self):
        super().__post_init__()
        if self.enforce_admissible and self.dims.s >= self.dims.p ** (0.5 - self.delta):
            raise InfeasibleSpec(f'The sparse Sobolev prior needs s < p^(1/2 - delta), got s={self.dims.s}.')

    def effective_n(self) -> float:
        return sobolev_sparse_N(self.dims.p, self.dims.n)


PRIOR_KINDS = {
    'trivial': TrivialPrior,
    'minimax': MinimaxPrior,
    'adaptive': AdaptivePrior,
    'sobolev_dense': SobolevDensePrior,
    'sobolev_sparse': SobolevSparsePrior,
}


def sample_prior(spec: PriorSpec, rng: np.random.Generator, check: bool = True) -> CoefficientMatrix:
    """
    Draws one Theta from a prior.

    Parameters
    ----------
    spec : PriorSpec
        The prior.
    rng : numpy.random.Generator
        The random stream, used exclusively by this call.
    check : bool
        Verify parameter-space membership of the draw when the prior enforces admissibility.

    Returns
    -------
    CoefficientMatrix
        The draw.

    Raises
    ------
    InfeasibleSpec
        If a checked draw leaves the parameter space.
    """
    theta = spec.sample(rng)
    if check and spec.enforce_admissible and not theta.in_parameter_space():
        raise InfeasibleSpec(f'{type(spec).__name__} produced a draw outside the parameter space '
                             f'(max ellipsoid sum {float(np.max(theta.ellipsoid_sums()))!r}).')
    return theta


def _check_overlap(spec: PriorSpec) -> OverlapPrior:
    if not isinstance(spec, OverlapPrior):
        raise TypeError(f'{type(spec).__name__} has no single-overlap divergence structure.')
    return spec


def chi2_divergence_exact(spec: PriorSpec) -> float:
    """
    The Ingster-Suslina divergence E[exp(lambda |S n S'|)] - 1, summed over the hypergeometric law of the overlap.

    Parameters
    ----------
    spec : PriorSpec
        A Trivial or Minimax prior.

    Returns
    -------
    float
        The exact divergence, infinite when it overflows.

    Raises
    ------
    EnumerationTooLarge
        If p > 10^4 or the support size exceeds 10^2.
    """
    spec = _check_overlap(spec)
    p, size = spec.dims.p, spec.support_size
    if p > MAX_ENUMERATION_P or size > MAX_ENUMERATION_S:
        raise EnumerationTooLarge(p, size)
    overlaps = np.arange(0, size + 1)
    log_pmf = hypergeom.logpmf(overlaps, p, size, size)
    log_mgf = logsumexp(log_pmf + spec.overlap_lambda() * overlaps)
    with np.errstate(over='ignore'):
        return float(np.expm1(log_mgf))


def chi2_divergence_bound(spec: PriorSpec) -> float:
    """
    The hypergeometric MGF bound (1 - s/p + (s/p) e^lambda)^s - 1.
    """
    spec = _check_overlap(spec)
    p, size = spec.dims.p, spec.support_size
    q = size / p
    if q >= 1.0:
        log_base = spec.overlap_lambda()
    else:
        log_base = float(np.logaddexp(math.log1p(-q), math.log(q) + spec.overlap_lambda()))
    with np.errstate(over='ignore'):
        return float(np.expm1(size * log_base))


def chi2_divergence_mc(spec: PriorSpec, pairs: int, seed: int) -> Tuple[float, float]:
    """
    Estimates E[exp(n <Theta, Theta'>)] - 1 from independent pairs of draws.

    Returns
    -------
    tuple of float
        The estimate and its standard error.
    """
    rng = np.random.default_rng(seed)
    n = spec.dims.n
    values = np.empty(pairs)
    for i in range(pairs):
        first = spec.sample(rng).values
        second = spec.sample(rng).values
        rows = min(first.shape[0], second.shape[0])
        inner = float(np.sum(first[:rows] * second[:rows]))
        values[i] = math.expm1(min(n * inner, 700.0))
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(pairs))


def total_risk_lower_bound(divergence: float) -> float:
    """
    The bound 1 - sqrt(divergence) / 2 on the total risk of any test, clamped to [0, 1].

    Examples
    --------
    >>> total_risk_lower_bound(0.36)
    0.7
    """
    if divergence < 0:
        raise ValueError(f'Divergence must be nonnegative, got {divergence!r}.')
    return min(1.0, max(0.0, 1.0 - math.sqrt(divergence) / 2.0))


class DivergenceMethod(enum.Enum):
    EXACT = 'Exact'
    BOUND = 'Bound'
    MONTE_CARLO = 'MonteCarlo'


@dataclass(frozen=True)
class DivergenceReport:
    exact: Optional[float]
    upper_bound: Optional[float]
    target: float
    method: DivergenceMethod
    risk_lower_bound: float
    mc_estimate: Optional[float] = None
    mc_standard_error: Optional[float] = None


def divergence_report(spec: PriorSpec, eta: float, mc_pairs: int = 0, seed: int = 0) -> DivergenceReport:
    """
    Evaluates the divergence of a prior by the strongest method it supports.

    Overlap priors get the exact value (within the enumeration gate) and the MGF bound; other
    priors get a paired-draw Monte Carlo estimate, which needs mc_pairs > 0.
    """
    target = 4.0 * eta ** 2
    exact = bound = estimate = se = None
    if isinstance(spec, OverlapPrior):
        bound = chi2_divergence_bound(spec)
        try:
            exact = chi2_divergence_exact(spec)
        except EnumerationTooLarge as e:
            stdout_logger.warning(f'{e} Reporting the bound only.')
    if mc_pairs > 0:
        estimate, se = chi2_divergence_mc(spec, mc_pairs, seed)
    if exact is not None:
        method, value = DivergenceMethod.EXACT, exact
    elif bound is not None:
        method, value = DivergenceMethod.BOUND, bound
    elif estimate is not None:
        method, value = DivergenceMethod.MONTE_CARLO, max(estimate, 0.0)
    else:
        raise ValueError(f'{type(spec).__name__} needs mc_pairs > 0 for a divergence estimate.')
    return DivergenceReport(exact, bound, target, method, total_risk_lower_bound(value), estimate, se)


def trivial_prior_c(eta: float, kappa: float) -> float:
    """
    The amplitude 1 ^ sqrt(kappa) ^ sqrt(kappa log(1 + 4 eta^2)), shrunk by 1% for the strict inequality.
    """
    return 0.99 * min(1.0, math.sqrt(kappa), math.sqrt(kappa * math.log1p(4.0 * eta ** 2)))


def minimax_prior_c(eta: float) -> float:
    """
    The amplitude 1 ^ 2^(1/4) ^ log(1 + 4 eta^2)^(1/4) of the bulk prior.
    """
    return min(1.0, 2.0 ** 0.25, math.log1p(4.0 * eta ** 2) ** 0.25)


def adaptive_prior_c(eta: float) -> float:
    return minimax_prior_c(eta) / math.sqrt(2.0)


def prior_from_config(kind: str, dims: ProblemDims, profile: EigenProfile, c: float, options: Dict[str, object]) -> PriorSpec:
    if kind not in PRIOR_KINDS:
        raise ValueError(f'Unknown prior kind {kind!r}, expected one of {sorted(PRIOR_KINDS)}.')
    return PRIOR_KINDS[kind](dims, profile, c, **options)
