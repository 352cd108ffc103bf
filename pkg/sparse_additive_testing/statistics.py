import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Iterator, List, Optional, Tuple, Union

import numpy as np

from sparse_additive_testing.exceptions import DimensionMismatch
from sparse_additive_testing.kernel_spectra import EigenProfile
from sparse_additive_testing.logging import stdout_logger
from sparse_additive_testing.rate_calculus import (DEFAULT_D, DEFAULT_K3,
                                                   AdaptationReport,
                                                   ProblemDims, Regime, A_H,
                                                   floored_loglog, nu_H,
                                                   select_regime,
                                                   sobolev_test_grid)
from sparse_additive_testing.special_functions import alpha_threshold

if TYPE_CHECKING:
    from sparse_additive_testing.montecarlo_harness import CalibrationTable

"""
Test statistics and decision rules on sequence-space observations.
"""


@dataclass(frozen=True, eq=False)
class Observation:
    """
    Noisy coefficients X_{k,j} ~ N(theta_{k,j}, 1/n), stored as a (k_max, p) array.
    """
    data: np.ndarray
    n: float

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise ValueError(f'Observations must be a (k_max, p) matrix, got shape {data.shape}.')
        if not np.all(np.isfinite(data)):
            raise ValueError('Observations must be finite.')
        if not self.n > 0:
            raise ValueError(f'Need n > 0, got {self.n!r}.')
        object.__setattr__(self, 'data', data)

    @property
    def k_max(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]


def _check_rows(obs: Observation, rows: int) -> None:
    if rows > obs.k_max:
        raise DimensionMismatch(f'{rows} rows', f'k_max={obs.k_max}')


def energies(obs: Observation, d: int) -> np.ndarray:
    """
    All coordinate energies E_j(d) = n sum_{k <= d} X_{k,j}^2.
    """
    _check_rows(obs, d)
    head = obs.data[:d]
    return obs.n * np.sum(head * head, axis=0)


def energy(obs: Observation, j: int, d: int) -> float:
    """
    The energy of coordinate j (1-based) over the first d rows.

    Examples
    --------
    >>> obs = Observation(np.array([[2.0]]), n=1.0)
    >>> energy(obs, 1, 1)
    4.0
    """
    if not 1 <= j <= obs.p:
        raise ValueError(f'Coordinate index must lie in [1, {obs.p}], got {j}.')
    _check_rows(obs, d)
    column = obs.data[:d, j - 1]
    return float(obs.n * np.sum(column * column))


def t_statistic(obs: Observation, d: int, r: float, alpha: Optional[float] = None) -> float:
    """
    The thresholded statistic T_r(d) = sum_j (E_j(d) - alpha_r(d)) 1{E_j(d) >= d + r^2}.

    Parameters
    ----------
    obs : Observation
        The data.
    d : int
        Rows aggregated per coordinate.
    r : float
        The threshold offset.
    alpha : float, optional
        A precomputed alpha_r(d).

    Returns
    -------
    float
        The statistic; exactly 0.0 when no coordinate exceeds d + r^2.
    """
    values = energies(obs, d)
    exceed = values[values >= d + r * r]
    if exceed.size == 0:
        return 0.0
    if alpha is None:
        alpha = alpha_threshold(d, r)
    return math.fsum(exceed - alpha)


def _iter_exceedances(obs: Observation, d: int, r: float, block: int) -> Iterator[float]:
    cutoff = d + r * r
    for start in range(0, obs.p, block):
        head = obs.data[:d, start:start + block]
        block_energies = obs.n * np.sum(head * head, axis=0)
        yield from block_energies[block_energies >= cutoff]


def t_statistic_streaming(obs: Observation, d: int, r: float, block: int = 256) -> float:
    """
    T_r(d) accumulated over column blocks in a single pass.
    """
    _check_rows(obs, d)
    alpha = None
    terms = []
    for value in _iter_exceedances(obs, d, r, block):
        if alpha is None:
            alpha = alpha_threshold(d, r)
        terms.append(value - alpha)
    return math.fsum(terms) if terms else 0.0


def dense_statistic(obs: Observation, nu: int) -> float:
    """
    The chi-squared statistic n sum_j sum_{k <= nu} X_{k,j}^2.
    """
    return math.fsum(energies(obs, nu))


@dataclass(frozen=True)
class SparseStatistic:
    """
    The identity of a thresholded statistic T_r(d).
    """
    d: int
    r: float
    kind = 'sparse'

    @property
    def rows(self) -> int:
        return self.d

    @cached_property
    def alpha(self) -> float:
        return alpha_threshold(self.d, self.r)

    def compute(self, obs: Observation) -> float:
        return t_statistic(obs, self.d, self.r, self.alpha)


@dataclass(frozen=True)
class DenseStatistic:
    """
    The identity of a dense chi-squared statistic over nu rows.
    """
    nu: int
    kind = 'dense'

    @property
    def rows(self) -> int:
        return self.nu

    def compute(self, obs: Observation) -> float:
        return dense_statistic(obs, self.nu)


Statistic = Union[SparseStatistic, DenseStatistic]


class TestSpec(ABC):
    """
    A fully resolved test: a statistic and its rejection threshold.
    """
    __test__ = False

    @property
    @abstractmethod
    def rows(self) -> int:
        pass

    @abstractmethod
    def reject(self, obs: Observation) -> bool:
        pass

    def expected_p(self) -> Optional[int]:
        return getattr(self, 'p', None)


@dataclass(frozen=True)
class SparseThreshold(TestSpec):
    d: int
    r: float
    threshold: float
    p: Optional[int] = None

    @property
    def statistic(self) -> SparseStatistic:
        return SparseStatistic(self.d, self.r)

    @property
    def rows(self) -> int:
        return self.d

    def reject(self, obs: Observation) -> bool:
        return self.statistic.compute(obs) >= self.threshold


@dataclass(frozen=True)
class DenseChi2(TestSpec):
    nu: int
    threshold: float
    p: Optional[int] = None

    @property
    def statistic(self) -> DenseStatistic:
        return DenseStatistic(self.nu)

    @property
    def rows(self) -> int:
        return self.nu

    def reject(self, obs: Observation) -> bool:
        return dense_statistic(obs, self.nu) >= self.threshold


@dataclass(frozen=True)
class AdaptiveComponent:
    nu: int
    s: int
    test: Union[SparseThreshold, DenseChi2]


@dataclass(frozen=True)
class AdaptiveMax(TestSpec):
    """
    The maximum over a grid of sparse and dense component tests.
    """
    components: Tuple[AdaptiveComponent, ...]
    level: float = 0.0
    a_star: float = 1.0
    p: Optional[int] = None

    @property
    def rows(self) -> int:
        return max(component.test.rows for component in self.components)

    def reject(self, obs: Observation) -> bool:
        return any(component.test.reject(obs) for component in self.components)


@dataclass(frozen=True)
class SobolevDenseAdaptive(TestSpec):
    """
    Dense chi-squared tests over a dyadic grid of truncation orders, rejecting when any rejects.
    """
    grid: Tuple[int, ...]
    thresholds: Tuple[float, ...]
    K: float
    p: Optional[int] = None

    @property
    def rows(self) -> int:
        return max(self.grid)

    def statistics(self, obs: Observation) -> np.ndarray:
        _check_rows(obs, self.rows)
        row_totals = obs.n * np.sum(obs.data[:self.rows] ** 2, axis=1)
        cumulative = np.cumsum(row_totals)
        return cumulative[np.asarray(self.grid) - 1]

    def reject(self, obs: Observation) -> bool:
        return bool(np.any(self.statistics(obs) >= np.asarray(self.thresholds)))


def decide(spec: TestSpec, obs: Observation) -> int:
    """
    Evaluates a test on an observation.

    Parameters
    ----------
    spec : TestSpec
        The resolved test.
    obs : Observation
        The data.

    Returns
    -------
    int
        1 when the statistic reaches its threshold (any component for grid tests), else 0.

    Raises
    ------
    DimensionMismatch
        If the test reads more rows, or expects a different p, than the observation has.
    """
    _check_rows(obs, spec.rows)
    expected_p = spec.expected_p()
    if expected_p is not None and expected_p != obs.p:
        raise DimensionMismatch(f'p={expected_p}', f'p={obs.p}')
    return int(spec.reject(obs))


def sparse_radius(d: int, log_term: float, regime: Regime, K2: float = 1.0, K2_tail: float = 1.0) -> float:
    """
    The threshold offset r: K2 (d L)^(1/4) in the bulk, K2' sqrt(L) in the tail.
    """
    if regime is Regime.SPARSE_BULK:
        return K2 * (d * log_term) ** 0.25
    if regime is Regime.SPARSE_TAIL:
        return K2_tail * math.sqrt(log_term)
    raise ValueError(f'Sparse thresholds exist only for bulk and tail regimes, got {regime}.')


def sparse_statistic_for(profile: EigenProfile, dims: ProblemDims, regime: Regime, K2: float = 1.0, K2_tail: float = 1.0,
                         D: float = DEFAULT_D) -> SparseStatistic:
    d = max(nu_H(profile, dims), math.ceil(D))
    return SparseStatistic(d, sparse_radius(d, dims.log_term, regime, K2, K2_tail))


def make_sparse_test(profile: EigenProfile, dims: ProblemDims, regime: Regime, table: 'CalibrationTable', level: float,
                     K2: float = 1.0, K2_tail: float = 1.0, D: float = DEFAULT_D) -> SparseThreshold:
    """
    Builds the thresholded test for the sparse regimes.

    Parameters
    ----------
    profile : EigenProfile
        The eigenvalue profile.
    dims : ProblemDims
        The problem instance.
    regime : Regime
        SparseBulk or SparseTail.
    table : CalibrationTable
        Calibrated null thresholds.
    level : float
        The target type I error.
    K2, K2_tail : float
        Radius constants for the bulk and tail branches.
    D : float
        The dimension floor.

    Returns
    -------
    SparseThreshold
        The resolved test with d = nu_H v ceil(D).

    Raises
    ------
    MissingCalibration
        If the table has no threshold for (d, r, p, level).
    """
    statistic = sparse_statistic_for(profile, dims, regime, K2, K2_tail, D)
    threshold = table.threshold(statistic, dims.p, level)
    return SparseThreshold(statistic.d, statistic.r, threshold, dims.p)


def make_dense_test(profile: EigenProfile, dims: ProblemDims, table: 'CalibrationTable', level: float) -> DenseChi2:
    statistic = DenseStatistic(nu_H(profile, dims))
    return DenseChi2(statistic.nu, table.threshold(statistic, dims.p, level), dims.p)


def minimax_statistic(profile: EigenProfile, dims: ProblemDims, K2: float = 1.0, K2_tail: float = 1.0,
                      K3: float = DEFAULT_K3, D: float = DEFAULT_D) -> Statistic:
    regime = select_regime(profile, dims, K3, D)
    if regime is Regime.TRIVIAL:
        raise ValueError(f'No test is needed in the trivial regime for {dims}.')
    if regime is Regime.DENSE:
        return DenseStatistic(nu_H(profile, dims))
    return sparse_statistic_for(profile, dims, regime, K2, K2_tail, D)


def make_minimax_test(profile: EigenProfile, dims: ProblemDims, table: 'CalibrationTable', level: float, K2: float = 1.0,
                      K2_tail: float = 1.0, K3: float = DEFAULT_K3, D: float = DEFAULT_D) -> Union[SparseThreshold, DenseChi2]:
    """
    The rate-optimal test for the regime select_regime picks.
    """
    statistic = minimax_statistic(profile, dims, K2, K2_tail, K3, D)
    threshold = table.threshold(statistic, dims.p, level)
    if isinstance(statistic, DenseStatistic):
        return DenseChi2(statistic.nu, threshold, dims.p)
    return SparseThreshold(statistic.d, statistic.r, threshold, dims.p)


@dataclass(frozen=True)
class AdaptivePlan:
    """
    The statistics behind each (nu, s) component of the adaptive test and their shared level.
    """
    components: Tuple[Tuple[int, int, Statistic], ...]
    component_level: float
    a_star: float
    p: int
    adaptation: Optional[AdaptationReport] = field(default=None, compare=False)

    @property
    def statistics(self) -> List[Statistic]:
        return sorted({statistic for _, _, statistic in self.components}, key=repr)


def plan_adaptive_test(profile: EigenProfile, p: int, n: float, level: float, K2: float = 1.0, K2_tail: float = 1.0,
                       K3: float = DEFAULT_K3, D: float = DEFAULT_D, adaptation: Optional[AdaptationReport] = None) -> AdaptivePlan:
    """
    Lays out the components of the adaptive test on the grid V_H x S.

    Components with s < sqrt(p A) use T_r(d_nu) with the bulk or tail radius; the rest use the
    dense statistic over nu rows. Each is calibrated at level / (2 |components|).
    """
    if adaptation is None:
        adaptation = A_H(profile, p, n)
    a_star = adaptation.a_star
    floor = math.ceil(D)
    components = []
    for nu in sorted(adaptation.V_H):
        d = max(nu, floor)
        for s in sorted(adaptation.S):
            log_term = math.log1p(p * a_star / s ** 2)
            if s < math.sqrt(p * a_star):
                regime = Regime.SPARSE_TAIL if math.sqrt(log_term) > K3 * math.sqrt(d) else Regime.SPARSE_BULK
                statistic = SparseStatistic(d, sparse_radius(d, log_term, regime, K2, K2_tail))
            else:
                statistic = DenseStatistic(nu)
            components.append((nu, s, statistic))
    component_level = level / (2.0 * len(components))
    return AdaptivePlan(tuple(components), component_level, a_star, p, adaptation)


def make_adaptive_test(profile: EigenProfile, p: int, n: float, table: 'CalibrationTable', level: float, K2: float = 1.0,
                       K2_tail: float = 1.0, K3: float = DEFAULT_K3, D: float = DEFAULT_D,
                       adaptation: Optional[AdaptationReport] = None) -> AdaptiveMax:
    """
    The sparsity-adaptive max test over V_H x S with Bonferroni-calibrated components.

    Raises
    ------
    MissingCalibration
        If any component statistic lacks a threshold at the component level.
    """
    plan = plan_adaptive_test(profile, p, n, level, K2, K2_tail, K3, D, adaptation)
    components = []
    for nu, s, statistic in plan.components:
        threshold = table.threshold(statistic, p, plan.component_level)
        if isinstance(statistic, DenseStatistic):
            test = DenseChi2(statistic.nu, threshold, p)
        else:
            test = SparseThreshold(statistic.d, statistic.r, threshold, p)
        components.append(AdaptiveComponent(nu, s, test))
    stdout_logger.info(f'Adaptive test with {len(components)} components at A={plan.a_star:.4f}.')
    return AdaptiveMax(tuple(components), level, plan.a_star, p)


def sobolev_thresholds(grid: Tuple[int, ...], p: int, n: float, K: float) -> Tuple[float, ...]:
    loglog = floored_loglog(n * p)
    return tuple(nu * p + K * (math.sqrt(nu * p * loglog) + loglog) for nu in grid)


def sobolev_theoretical_constant(p: int, n: float, alpha0: float, eta: float) -> float:
    """
    The smallest K >= 1 whose Laurent-Massart union bound over the grid is at most eta.
    """
    size = len(sobolev_test_grid(p, n, alpha0))
    return max(1.0, 4.0 * math.log(size / eta) / floored_loglog(n * p))


def laurent_massart_null_bound(K: float, p: int, n: float, alpha0: float) -> float:
    """
    Null rejection bound |V_test| exp(-K loglog(np) / 4) of the Sobolev adaptive test, valid for K >= 1.
    """
    if K < 1:
        raise ValueError(f'The union bound needs K >= 1, got {K!r}.')
    size = len(sobolev_test_grid(p, n, alpha0))
    return min(1.0, size * math.exp(-K * floored_loglog(n * p) / 4.0))


def make_sobolev_adaptive_test(alpha0: float, alpha1: float, p: int, n: float, K: Optional[float] = None,
                               level: float = 0.05, reps: int = 2000, seed: int = 0, jobs: int = 1) -> SobolevDenseAdaptive:
    """
    The smoothness-adaptive dense test over the grid V_test.

    Parameters
    ----------
    alpha0, alpha1 : float
        The smoothness range, alpha0 < alpha1.
    p : int
        The number of coordinates.
    n : float
        The noise level parameter.
    K : float, optional
        The level constant; calibrated by Monte Carlo at `level` when omitted.
    level, reps, seed, jobs
        Calibration settings used only when K is omitted.

    Returns
    -------
    SobolevDenseAdaptive
        Per-nu thresholds nu p + K (sqrt(nu p loglog(np)) + loglog(np)).
    """
    if not alpha0 < alpha1:
        raise ValueError(f'Need alpha0 < alpha1, got {alpha0!r} and {alpha1!r}.')
    grid = sobolev_test_grid(p, n, alpha0)
    if K is None:
        from sparse_additive_testing.montecarlo_harness import calibrate_sobolev_constant
        K = calibrate_sobolev_constant(grid, p, n, level, reps, seed, jobs)
    return SobolevDenseAdaptive(grid, sobolev_thresholds(grid, p, n, K), K, p)


def required_statistics(kind: str, profile: EigenProfile, dims: ProblemDims, level: float, K2: float = 1.0,
                        K2_tail: float = 1.0, K3: float = DEFAULT_K3, D: float = DEFAULT_D) -> Tuple[List[Statistic], float]:
    """
    The statistic identities a test family reads and the level they are calibrated at.

    Parameters
    ----------
    kind : str
        One of 'minimax', 'sparse', 'dense' or 'adaptive'.
    profile : EigenProfile
        The eigenvalue profile.
    dims : ProblemDims
        The problem; s is ignored by the adaptive family.
    level : float
        The overall level of the test.

    Returns
    -------
    tuple
        (statistics, calibration level).
    """
    if kind == 'adaptive':
        plan = plan_adaptive_test(profile, dims.p, dims.n, level, K2, K2_tail, K3, D)
        return plan.statistics, plan.component_level
    if kind == 'minimax':
        return [minimax_statistic(profile, dims, K2, K2_tail, K3, D)], level
    if kind == 'dense':
        return [DenseStatistic(nu_H(profile, dims))], level
    if kind == 'sparse':
        regime = select_regime(profile, dims, K3, D)
        if regime not in (Regime.SPARSE_BULK, Regime.SPARSE_TAIL):
            regime = Regime.SPARSE_BULK
        return [sparse_statistic_for(profile, dims, regime, K2, K2_tail, D)], level
    raise ValueError(f'Unknown test family {kind!r}.')
