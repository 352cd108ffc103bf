import enum
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Optional, Tuple

import numpy as np

from sparse_additive_testing.exceptions import RateOverflow
from sparse_additive_testing.kernel_spectra import (EigenProfile, ExplicitProfile,
                                                    validate_profile)
from sparse_additive_testing.logging import stdout_logger

"""
Deterministic rate objects: truncation orders, the nonparametric rate per active coordinate,
minimax and adaptive separation rates, the adaptation fixed point and its dyadic grids.
"""

NU_LIMIT = 2 ** 40
DEFAULT_D = 8.0
DEFAULT_K3 = 1.0
A_GRID_STEP = 1.01
BISECTION_STEPS = 60


class Regime(enum.Enum):
    TRIVIAL = 'Trivial'
    SPARSE_BULK = 'SparseBulk'
    SPARSE_TAIL = 'SparseTail'
    DENSE = 'Dense'


@dataclass(frozen=True)
class ProblemDims:
    """
    One detection problem: p coordinates, at most s active, noise variance 1/n and an
    adaptation budget a >= 1.
    """
    p: int
    s: int
    n: float
    a: float = 1.0

    def __post_init__(self):
        if not (1 <= self.s <= self.p):
            raise ValueError(f'Need 1 <= s <= p, got s={self.s}, p={self.p}.')
        if not self.n > 0:
            raise ValueError(f'Need n > 0, got {self.n!r}.')
        if not self.a >= 1:
            raise ValueError(f'Adaptation budget must be at least 1, got {self.a!r}.')

    @property
    def log_term(self) -> float:
        """
        log(1 + p a / s^2).
        """
        return math.log1p(self.p * self.a / self.s ** 2)

    @property
    def nontrivial(self) -> bool:
        return self.log_term <= self.n / 2.0

    def with_sparsity(self, s: int) -> 'ProblemDims':
        return ProblemDims(self.p, s, self.n, self.a)

    def with_budget(self, a: float) -> 'ProblemDims':
        return ProblemDims(self.p, self.s, self.n, a)


@dataclass(frozen=True)
class RateReport:
    """
    A squared separation rate with the truncation order and per-coordinate rate behind it.
    """
    nu: int
    gamma: float
    eps_sq: float
    regime: Regime
    dims: Optional[ProblemDims] = None
    verified: bool = True


@dataclass(frozen=True)
class AdaptationReport:
    """
    The adaptation fixed point with the grids built from it.
    """
    a_star: float
    bracket: Tuple[float, float]
    V_H: FrozenSet[int]
    S: FrozenSet[int] = field(default_factory=frozenset)
    tilde_V: FrozenSet[int] = field(default_factory=frozenset)


@dataclass(frozen=True)
class SobolevAdaptiveRates:
    tau_dense_sq: float
    tau_sparse_sq: float
    V_test: Tuple[int, ...]


def _crosses(profile: EigenProfile, nu: int, log_term: float, n: float) -> bool:
    return profile.eigenvalue(nu) <= math.sqrt(nu * log_term) / n


def nu_H(profile: EigenProfile, dims: ProblemDims) -> int:
    """
    The smallest nu >= 1 with mu_nu <= sqrt(nu log(1 + p a / s^2)) / n.

    Parameters
    ----------
    profile : EigenProfile
        The eigenvalue profile.
    dims : ProblemDims
        The problem instance.

    Returns
    -------
    int
        The truncation order.

    Raises
    ------
    RateOverflow
        If the order exceeds 2^40.
    InvalidProfile
        If an explicit profile is not normalized or not nonincreasing.

    Examples
    --------
    >>> from sparse_additive_testing.kernel_spectra import SobolevProfile
    >>> nu_H(SobolevProfile(1.0), ProblemDims(p=100, s=1, n=1000))
    12
    """
    if isinstance(profile, ExplicitProfile):
        validate_profile(profile, check_max=len(profile.values) + 1, strict=True)
    log_term = dims.log_term
    if _crosses(profile, 1, log_term, dims.n):
        return 1
    lo, hi = 1, 2
    while not _crosses(profile, hi, log_term, dims.n):
        lo, hi = hi, hi * 2
        if hi > NU_LIMIT:
            raise RateOverflow(NU_LIMIT)
    # lo fails, hi holds
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _crosses(profile, mid, log_term, dims.n):
            hi = mid
        else:
            lo = mid
    return hi


def gamma_H(profile: EigenProfile, dims: ProblemDims, nu: Optional[int] = None) -> float:
    """
    The max over nu of min(mu_nu, sqrt(nu L) / n), in closed form mu_nu_H v sqrt((nu_H - 1) L) / n.
    """
    if nu is None:
        nu = nu_H(profile, dims)
    return max(profile.eigenvalue(nu), math.sqrt((nu - 1) * dims.log_term) / dims.n)


def gamma_H_bruteforce(profile: EigenProfile, dims: ProblemDims, nu_max: int) -> float:
    """
    The direct max over nu in [1, nu_max] of min(mu_nu, sqrt(nu L) / n).
    """
    ks = np.arange(1, nu_max + 1)
    return float(np.max(np.minimum(profile.eigenvalues(ks), np.sqrt(ks * dims.log_term) / dims.n)))


def select_regime(profile: EigenProfile, dims: ProblemDims, K3: float = DEFAULT_K3, D: float = DEFAULT_D,
                  nu: Optional[int] = None) -> Regime:
    """
    Classifies the problem as trivial, dense, or sparse with bulk or tail thresholds.

    Parameters
    ----------
    profile : EigenProfile
        The eigenvalue profile.
    dims : ProblemDims
        The problem instance, with the adaptation budget entering sqrt(p a).
    K3 : float
        The bulk/tail boundary constant.
    D : float
        The dimension floor; the sparse tests aggregate d = nu_H v ceil(D) rows.

    Returns
    -------
    Regime
        The selected regime.
    """
    if not dims.nontrivial:
        return Regime.TRIVIAL
    if dims.s >= math.sqrt(dims.p * dims.a):
        return Regime.DENSE
    if nu is None:
        nu = nu_H(profile, dims)
    d = max(nu, math.ceil(D))
    if math.sqrt(dims.log_term) > K3 * math.sqrt(d):
        return Regime.SPARSE_TAIL
    return Regime.SPARSE_BULK


def minimax_rate(profile: EigenProfile, dims: ProblemDims, K3: float = DEFAULT_K3, D: float = DEFAULT_D) -> RateReport:
    """
    The squared minimax separation rate.

    Parameters
    ----------
    profile : EigenProfile
        The eigenvalue profile.
    dims : ProblemDims
        The problem instance; the adaptation budget must be 1.
    K3 : float
        The bulk/tail boundary constant.
    D : float
        The dimension floor.

    Returns
    -------
    RateReport
        The rate, capped at s.
    """
    if dims.a != 1:
        raise ValueError(f'The minimax rate is defined at a = 1, got a={dims.a!r}.')
    nu = nu_H(profile, dims)
    gamma = gamma_H(profile, dims, nu)
    regime = select_regime(profile, dims, K3, D, nu)
    log_term = dims.log_term
    if regime is Regime.TRIVIAL:
        eps_sq = float(dims.s)
    elif regime is Regime.DENSE:
        eps_sq = math.sqrt(dims.p * nu) / dims.n
    else:
        eps_sq = dims.s / dims.n * log_term + dims.s / dims.n * math.sqrt(nu * log_term)
    return RateReport(nu, gamma, min(eps_sq, float(dims.s)), regime, dims)


def lower_bound_rate(profile: EigenProfile, dims: ProblemDims) -> float:
    """
    The lower-bound form of the squared rate: (s/n) L v s Gamma_H when s < sqrt(p a), s Gamma_H
    otherwise, capped at s.
    """
    gamma = gamma_H(profile, dims)
    rate = dims.s * gamma
    if dims.s < math.sqrt(dims.p * dims.a):
        rate = max(dims.s / dims.n * dims.log_term, rate)
    return min(rate, float(dims.s))


def adaptive_lower_bound_rate(profile: EigenProfile, dims: ProblemDims, a_star: float) -> float:
    return lower_bound_rate(profile, dims.with_budget(a_star))


def _bucket(nu: int) -> int:
    """
    The dyadic exponent k with 2^(k-1) < nu <= 2^k.
    """
    return (nu - 1).bit_length()


def first_sparsity_above(profile: EigenProfile, p: int, n: float, a: float, s_lo: int, s_hi: int, nu_floor: int) -> Optional[int]:
    """
    Smallest s in [s_lo, s_hi] with nu_H(s, a) > nu_floor, using monotonicity in s.
    """
    def nu_at(s):
        return nu_H(profile, ProblemDims(p, s, n, a))

    if nu_at(s_hi) <= nu_floor:
        return None
    lo, hi = s_lo - 1, s_hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if nu_at(mid) > nu_floor:
            hi = mid
        else:
            lo = mid
    return hi


def _dyadic_grid(profile: EigenProfile, p: int, n: float, a: float, s_lo: int, s_hi: int) -> FrozenSet[int]:
    if s_lo > s_hi:
        return frozenset()
    k_lo = _bucket(nu_H(profile, ProblemDims(p, s_lo, n, a)))
    k_hi = _bucket(nu_H(profile, ProblemDims(p, s_hi, n, a)))
    grid = {2 ** k_lo, 2 ** k_hi}
    for k in range(k_lo + 1, k_hi):
        s = first_sparsity_above(profile, p, n, a, s_lo, s_hi, 2 ** (k - 1))
        if s is not None and nu_H(profile, ProblemDims(p, s, n, a)) <= 2 ** k:
            grid.add(2 ** k)
    return frozenset(grid)


def grid_V(profile: EigenProfile, p: int, n: float, a: float = 1.0) -> FrozenSet[int]:
    """
    The dyadic grid {2^k : 2^(k-1) < nu_H(s, a) <= 2^k for some s in [p]}.

    Since nu_H(s, a) is nondecreasing in s only the first s entering each dyadic bucket is visited.
    """
    if a < 1:
        raise ValueError(f'Adaptation budget must be at least 1, got {a!r}.')
    return _dyadic_grid(profile, p, n, a, 1, p)


def grid_V_exhaustive(profile: EigenProfile, p: int, n: float, a: float = 1.0, s_values: Optional[Iterable[int]] = None) -> FrozenSet[int]:
    s_values = range(1, p + 1) if s_values is None else s_values
    return frozenset(2 ** _bucket(nu_H(profile, ProblemDims(p, s, n, a))) for s in s_values)


def _budget_holds(profile: EigenProfile, p: int, n: float, a: float) -> bool:
    return math.log(math.e * len(grid_V(profile, p, n, a))) >= a


def A_H(profile: EigenProfile, p: int, n: float) -> AdaptationReport:
    """
    The adaptation fixed point sup{a >= 1 : log(e |V_a|) >= a}.

    The condition is scanned on a 1.01-geometric grid of a over [1, log(e p)]. Since |V_a| is
    nonincreasing in a, the first failing grid point ends the scan and bisection inside the last
    bracket localizes the step boundary.

    Parameters
    ----------
    profile : EigenProfile
        The eigenvalue profile.
    p : int
        The number of coordinates.
    n : float
        The noise level parameter.

    Returns
    -------
    AdaptationReport
        a_star, the grid bracket holding the sup, V_H, S and tilde_V.
    """
    upper = math.log(math.e * p)
    lo = 1.0
    hi = None
    a = A_GRID_STEP
    while a <= upper:
        if not _budget_holds(profile, p, n, a):
            hi = a
            break
        lo = a
        a *= A_GRID_STEP
    if hi is None:
        # the condition holds on the whole grid; the sup sits at the top of the range
        hi = upper
        if _budget_holds(profile, p, n, upper):
            lo = upper
    bracket = (lo, hi)
    for _ in range(BISECTION_STEPS):
        if hi - lo <= 1e-12 * hi:
            break
        mid = 0.5 * (lo + hi)
        if _budget_holds(profile, p, n, mid):
            lo = mid
        else:
            hi = mid
    a_star = lo
    V_H = grid_V(profile, p, n, a_star)
    S = grid_S(p, a_star)
    tilde_V = grid_tilde_V(profile, p, n, a_star)
    stdout_logger.debug(f'Adaptation fixed point {a_star} in {bracket}, |V_H|={len(V_H)}.')
    return AdaptationReport(a_star, bracket, V_H, S, tilde_V)


def grid_S(p: int, a_star: float) -> FrozenSet[int]:
    """
    The sparsity grid {1, 2, 4, ..., 2^(ceil(log2 sqrt(p A)) - 1)} plus {p}.

    Examples
    --------
    >>> sorted(grid_S(16, 1.0))
    [1, 2, 16]
    """
    top = math.ceil(math.log2(math.sqrt(p * a_star))) - 1
    return frozenset([2 ** k for k in range(0, top + 1)] + [p])


def dense_sparsity_floor(p: int, a_star: float) -> int:
    """
    The smallest integer s with s >= sqrt(p A).
    """
    return math.ceil(math.sqrt(p * a_star))


def grid_tilde_V(profile: EigenProfile, p: int, n: float, a_star: float) -> FrozenSet[int]:
    """
    The dyadic grid of nu_H(s, A) restricted to the dense sparsities s >= sqrt(p A).
    """
    return _dyadic_grid(profile, p, n, a_star, dense_sparsity_floor(p, a_star), p)


def adaptation_condition(a_star: float, tilde_V: FrozenSet[int], multipliers: Tuple[float, ...] = (1.0, 2.0, 4.0)) -> Dict[float, bool]:
    """
    Reports whether A <= L log(e |tilde_V|) for each multiplier L.
    """
    size = max(len(tilde_V), 1)
    return {L: a_star <= L * math.log(math.e * size) for L in multipliers}


def adaptive_rate(profile: EigenProfile, dims: ProblemDims, a_star: float, K3: float = DEFAULT_K3, D: float = DEFAULT_D,
                  delta: float = 0.1) -> RateReport:
    """
    The squared adaptive separation rate at the fixed point a_star.

    Parameters
    ----------
    profile : EigenProfile
        The eigenvalue profile.
    dims : ProblemDims
        The problem instance; its adaptation budget is replaced by a_star.
    a_star : float
        The adaptation fixed point.
    delta : float
        Width of the sparsity window (pA)^(1/2 - delta) < s < sqrt(pA) flagged as unverified.

    Returns
    -------
    RateReport
        The rate, capped at s, with `verified` False inside the unresolved window.
    """
    adapted = dims.with_budget(a_star)
    if math.log1p(dims.p * a_star) > dims.n / 2:
        stdout_logger.warning(f'log(1 + p A) exceeds n/2 for {adapted}; the adaptive rate is outside its guarantee.')
    nu = nu_H(profile, adapted)
    gamma = gamma_H(profile, adapted, nu)
    log_term = adapted.log_term
    nonparametric = dims.s / dims.n * math.sqrt(nu * log_term)
    branch_point = math.sqrt(dims.p * a_star)
    if dims.s < branch_point:
        eps_sq = max(dims.s / dims.n * log_term, nonparametric)
    else:
        eps_sq = nonparametric
    regime = select_regime(profile, adapted, K3, D, nu)
    verified = not ((dims.p * a_star) ** (0.5 - delta) < dims.s < branch_point)
    return RateReport(nu, gamma, min(eps_sq, float(dims.s)), regime, adapted, verified)


def floored_loglog(x: float) -> float:
    """
    log(log(x)) floored at 1.
    """
    if x <= math.e:
        return 1.0
    return max(1.0, math.log(math.log(x)))


def floored_log(x: float) -> float:
    return max(1.0, math.log(x)) if x > 0 else 1.0


def sobolev_dense_N(p: int, s: int, n: float) -> float:
    """
    The effective sample size n s / sqrt(p loglog(np)) of the dense Sobolev adaptation problem.
    """
    return n * s / math.sqrt(p * floored_loglog(n * p))


def sobolev_sparse_N(p: int, n: float) -> float:
    return n / math.sqrt(floored_log(p * floored_loglog(n)))


def sobolev_test_grid(p: int, n: float, alpha0: float) -> Tuple[int, ...]:
    """
    The grid {1, 2, ..., 2^K} with K = ceil(log2((np / sqrt(p loglog(np)))^(2/(4 alpha0 + 1)))).
    """
    base = n * p / math.sqrt(p * floored_loglog(n * p))
    top = math.ceil(math.log2(base) * 2.0 / (4.0 * alpha0 + 1.0))
    return tuple(2 ** k for k in range(0, max(top, 0) + 1))


def sobolev_adaptive_rates(alpha: float, p: int, s: int, n: float, alpha0: Optional[float] = None) -> SobolevAdaptiveRates:
    """
    Sparsity and smoothness adaptive rates for Sobolev balls.

    Parameters
    ----------
    alpha : float
        The true smoothness, inside [alpha0, alpha1].
    p, s : int
        The number of coordinates and the sparsity.
    n : float
        The noise level parameter.
    alpha0 : float, optional
        The lower end of the smoothness range used for the test grid, alpha by default.

    Returns
    -------
    SobolevAdaptiveRates
        tau_dense^2, tau_sparse^2 and the test grid.
    """
    if alpha0 is None:
        alpha0 = alpha
    if alpha0 > alpha:
        raise ValueError(f'Smoothness {alpha!r} is below the range start {alpha0!r}.')
    exponent = -4.0 * alpha / (4.0 * alpha + 1.0)
    tau_dense_sq = s * sobolev_dense_N(p, s, n) ** exponent
    log_sparse = floored_log(p * floored_loglog(n))
    tau_sparse_sq = s * log_sparse / n + s * sobolev_sparse_N(p, n) ** exponent
    return SobolevAdaptiveRates(tau_dense_sq, tau_sparse_sq, sobolev_test_grid(p, n, alpha0))
