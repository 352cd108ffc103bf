import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import (Callable, Dict, Iterable, List, Optional, Sequence, Tuple,
                    Union)

import numpy as np
from scipy.stats import spearmanr
from statsmodels.stats.proportion import proportion_confint

from sparse_additive_testing.exceptions import (DimensionMismatch,
                                                InsufficientReps,
                                                MissingCalibration)
from sparse_additive_testing.kernel_spectra import FiniteRankProfile
from sparse_additive_testing.logging import stdout_logger
from sparse_additive_testing.priors_divergence import (CoefficientMatrix,
                                                       PriorSpec,
                                                       sample_prior)
from sparse_additive_testing.rate_calculus import ProblemDims, floored_loglog
from sparse_additive_testing.statistics import (Observation, Statistic,
                                                TestSpec, decide)

"""
Monte Carlo harness: observation generation, null calibration of thresholds, risk estimates
with Wilson intervals and power curves.

Every replication draws from its own Philox stream keyed by (seed, stream) with the replication
index in the counter, so results do not depend on how replications are spread over workers.
"""

U64 = 2 ** 64
MIN_K_MAX = 64
CHUNKS_PER_JOB = 4
Alternative = Union[CoefficientMatrix, PriorSpec, None]


class Stream(enum.IntEnum):
    NULL = 0
    ALTERNATIVE = 1
    PRIOR = 2


def replication_rng(seed: int, rep: int, stream: Stream) -> np.random.Generator:
    """
    The generator for one replication of one stream.

    Parameters
    ----------
    seed : int
        The experiment seed, an unsigned 64-bit integer.
    rep : int
        The replication index.
    stream : Stream
        Which random quantity the generator feeds.

    Returns
    -------
    numpy.random.Generator
        A Philox generator whose draws depend only on (seed, stream, rep).
    """
    if not 0 <= seed < U64:
        raise ValueError(f'Seed must be an unsigned 64-bit integer, got {seed!r}.')
    key = seed + int(stream) * U64
    return np.random.Generator(np.random.Philox(key=key, counter=rep << 128))


def default_k_max(nus: Iterable[int]) -> int:
    return max(4 * max(nus, default=1), MIN_K_MAX)


def generate_observation(theta: CoefficientMatrix, n: float, rng: np.random.Generator, k_max: Optional[int] = None) -> Observation:
    """
    Draws X = Theta + g / sqrt(n) on a k_max by p grid.

    Rows are drawn in order, so the first k rows do not depend on k_max.
    """
    values = theta.values if k_max is None else theta.truncated(k_max).values
    noise = rng.standard_normal(values.shape)
    return Observation(values + noise / math.sqrt(n), n)


def null_observation(p: int, n: float, k_max: int, rng: np.random.Generator) -> Observation:
    return Observation(rng.standard_normal((k_max, p)) / math.sqrt(n), n)


def wilson_interval(count: int, nobs: int, alpha: float = 0.05) -> Tuple[float, float]:
    low, high = proportion_confint(count, nobs, alpha=alpha, method='wilson')
    return float(low), float(high)


def _chunks(reps: int, jobs: int) -> List[Tuple[int, int]]:
    pieces = max(1, jobs * CHUNKS_PER_JOB)
    bounds = np.linspace(0, reps, min(pieces, reps) + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _map_chunks(worker: Callable, tasks: List[tuple], jobs: int) -> list:
    if jobs <= 1 or len(tasks) == 1:
        return [worker(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(worker, tasks))


def empirical_quantile_threshold(values: np.ndarray, level: float) -> float:
    """
    The conservative (1 - level) order statistic of a null sample.

    The ceil((1 - level) m)-th smallest value is taken; if ties at it would push the fraction of
    values at or above it past `level`, the next float up is returned instead.
    """
    values = np.sort(np.asarray(values, dtype=float))
    m = len(values)
    index = min(max(math.ceil((1.0 - level) * m - 1e-9), 1), m)
    threshold = float(values[index - 1])
    if np.count_nonzero(values >= threshold) > level * m:
        threshold = float(np.nextafter(threshold, np.inf))
    return threshold


@dataclass(frozen=True)
class CalibrationKey:
    statistic: Statistic
    p: int
    level: float


@dataclass
class CalibrationTable:
    """
    Calibrated null thresholds by (statistic identity, p, level).
    """
    entries: Dict[CalibrationKey, float] = field(default_factory=dict)
    reps: int = 0
    seed: int = 0

    def threshold(self, statistic: Statistic, p: int, level: float) -> float:
        key = CalibrationKey(statistic, p, level)
        if key not in self.entries:
            raise MissingCalibration(key)
        return self.entries[key]

    def record(self, statistic: Statistic, p: int, level: float, threshold: float) -> None:
        self.entries[CalibrationKey(statistic, p, level)] = threshold

    def __contains__(self, key: CalibrationKey) -> bool:
        return key in self.entries

    def is_monotone(self) -> bool:
        """
        Checks that lower levels never carry lower thresholds for the same statistic and p.
        """
        groups: Dict[Tuple[Statistic, int], List[Tuple[float, float]]] = {}
        for key, threshold in self.entries.items():
            groups.setdefault((key.statistic, key.p), []).append((key.level, threshold))
        for pairs in groups.values():
            thresholds = [threshold for _, threshold in sorted(pairs)]
            if any(b > a for a, b in zip(thresholds, thresholds[1:])):
                return False
        return True


def _null_statistics_chunk(task: tuple) -> np.ndarray:
    statistics, p, n, rows, seed, start, stop = task
    out = np.empty((stop - start, len(statistics)))
    for i, rep in enumerate(range(start, stop)):
        obs = null_observation(p, n, rows, replication_rng(seed, rep, Stream.NULL))
        out[i] = [statistic.compute(obs) for statistic in statistics]
    return out


def null_statistics(statistics: Sequence[Statistic], dims: ProblemDims, reps: int, seed: int, jobs: int = 1) -> np.ndarray:
    """
    Simulates the statistics on shared null observations, one row per replication.
    """
    rows = max(statistic.rows for statistic in statistics)
    tasks = [(tuple(statistics), dims.p, dims.n, rows, seed, a, b) for a, b in _chunks(reps, jobs)]
    return np.vstack(_map_chunks(_null_statistics_chunk, tasks, jobs))


def _check_reps(reps: int, level: float) -> None:
    if not 0 < level < 1:
        raise ValueError(f'Level must lie in (0, 1), got {level!r}.')
    if reps < 10.0 / level:
        raise InsufficientReps(reps, level)


def calibrate_threshold(statistic: Statistic, dims: ProblemDims, level: float, reps: int, seed: int, jobs: int = 1,
                        table: Optional[CalibrationTable] = None, cache=None) -> float:
    """
    Calibrates one statistic's rejection threshold under the null.

    Parameters
    ----------
    statistic : SparseStatistic or DenseStatistic
        The statistic identity.
    dims : ProblemDims
        Supplies p and n.
    level : float
        The target type I error.
    reps : int
        Null replications, at least 10 / level.
    seed : int
        The experiment seed.
    jobs : int
        Worker processes.
    table : CalibrationTable, optional
        A table to record the threshold in.
    cache : CalibrationCache, optional
        A persistent cache consulted first and updated after.

    Returns
    -------
    float
        The empirical (1 - level) quantile of the null statistic.

    Raises
    ------
    InsufficientReps
        If reps < 10 / level.
    """
    table = table if table is not None else CalibrationTable(reps=reps, seed=seed)
    calibrate_table([statistic], dims, level, reps, seed, jobs, table, cache)
    return table.threshold(statistic, dims.p, level)


def calibrate_table(statistics: Sequence[Statistic], dims: ProblemDims, level: float, reps: int, seed: int, jobs: int = 1,
                    table: Optional[CalibrationTable] = None, cache=None) -> CalibrationTable:
    """
    Calibrates every statistic not yet in the table from one shared set of null replications.
    """
    _check_reps(reps, level)
    table = table if table is not None else CalibrationTable(reps=reps, seed=seed)
    table.reps, table.seed = reps, seed
    missing = []
    for statistic in dict.fromkeys(statistics):
        if CalibrationKey(statistic, dims.p, level) in table:
            continue
        cached = cache.lookup(statistic, dims, level, reps, seed) if cache is not None else None
        if cached is not None:
            table.record(statistic, dims.p, level, cached)
        else:
            missing.append(statistic)
    if not missing:
        return table
    stdout_logger.info(f'Calibrating {len(missing)} statistic(s) at level {level!r} with {reps} null replications.')
    samples = null_statistics(missing, dims, reps, seed, jobs)
    for column, statistic in enumerate(missing):
        threshold = empirical_quantile_threshold(samples[:, column], level)
        table.record(statistic, dims.p, level, threshold)
        if cache is not None:
            cache.store(statistic, dims, level, reps, seed, threshold)
    return table


def _sobolev_chunk(task: tuple) -> np.ndarray:
    grid, p, n, seed, start, stop = task
    grid = np.asarray(grid)
    loglog = floored_loglog(n * p)
    scale = np.sqrt(grid * p * loglog) + loglog
    out = np.empty(stop - start)
    for i, rep in enumerate(range(start, stop)):
        obs = null_observation(p, n, int(grid.max()), replication_rng(seed, rep, Stream.NULL))
        cumulative = np.cumsum(obs.n * np.sum(obs.data ** 2, axis=1))
        out[i] = np.max((cumulative[grid - 1] - grid * p) / scale)
    return out


def calibrate_sobolev_constant(grid: Sequence[int], p: int, n: float, level: float, reps: int, seed: int, jobs: int = 1) -> float:
    """
    Calibrates K so that max over the grid of the standardized dense statistics exceeds K with
    probability `level` under the null.
    """
    _check_reps(reps, level)
    tasks = [(tuple(grid), p, n, seed, a, b) for a, b in _chunks(reps, jobs)]
    samples = np.concatenate(_map_chunks(_sobolev_chunk, tasks, jobs))
    return empirical_quantile_threshold(samples, level)


@dataclass(frozen=True)
class RiskEstimate:
    """
    Monte Carlo type I and type II errors with 95% Wilson intervals.
    """
    type1: float
    type2: float
    reps: int
    ci_half_width: float
    seed: int
    type1_ci: Tuple[float, float] = (0.0, 1.0)
    type2_ci: Tuple[float, float] = (0.0, 1.0)
    mean_norm_sq: float = 0.0
    admissible_fraction: float = 1.0

    @property
    def total(self) -> float:
        return self.type1 + self.type2


@dataclass(frozen=True)
class ReplicationRecord:
    null_decisions: np.ndarray
    alt_decisions: np.ndarray
    norms_sq: np.ndarray
    admissible: np.ndarray


def _draw_theta(alt: Alternative, seed: int, rep: int) -> CoefficientMatrix:
    if isinstance(alt, PriorSpec):
        return sample_prior(alt, replication_rng(seed, rep, Stream.PRIOR))
    return alt


def _replication_chunk(task: tuple) -> tuple:
    spec, alt, p, n, k_max, seed, with_null, start, stop = task
    size = stop - start
    null_decisions = np.zeros(size, dtype=np.int8)
    alt_decisions = np.zeros(size, dtype=np.int8)
    norms = np.zeros(size)
    admissible = np.ones(size, dtype=bool)
    for i, rep in enumerate(range(start, stop)):
        if with_null:
            obs = null_observation(p, n, k_max, replication_rng(seed, rep, Stream.NULL))
            null_decisions[i] = decide(spec, obs)
        if alt is not None:
            theta = _draw_theta(alt, seed, rep)
            norms[i] = theta.norm_sq
            admissible[i] = theta.in_parameter_space()
            obs = generate_observation(theta, n, replication_rng(seed, rep, Stream.ALTERNATIVE), k_max)
            alt_decisions[i] = decide(spec, obs)
    return null_decisions, alt_decisions, norms, admissible


def _resolve_k_max(spec: TestSpec, alt: Alternative, dims: ProblemDims, k_max: Optional[int]) -> int:
    if spec.expected_p() is not None and spec.expected_p() != dims.p:
        raise DimensionMismatch(f'p={spec.expected_p()}', f'p={dims.p}')
    if k_max is None:
        k_max = default_k_max([spec.rows])
        if isinstance(alt, PriorSpec):
            k_max = max(k_max, alt.rows)
    if k_max < spec.rows:
        raise DimensionMismatch(f'{spec.rows} rows', f'k_max={k_max}')
    if isinstance(alt, CoefficientMatrix):
        if alt.p != dims.p:
            raise DimensionMismatch(f'p={dims.p}', f'alternative with p={alt.p}')
        if alt.rows > k_max:
            stdout_logger.warning(f'Alternative truncated to {k_max} rows; norm loss at most {alt.truncation_bias(k_max)!r}.')
    return k_max


def run_replications(spec: TestSpec, alt: Alternative, dims: ProblemDims, reps: int, seed: int, jobs: int = 1,
                     k_max: Optional[int] = None, with_null: bool = True) -> ReplicationRecord:
    """
    Per-replication decisions under the null and under the alternative.
    """
    k_max = _resolve_k_max(spec, alt, dims, k_max)
    tasks = [(spec, alt, dims.p, dims.n, k_max, seed, with_null, a, b) for a, b in _chunks(reps, jobs)]
    parts = _map_chunks(_replication_chunk, tasks, jobs)
    return ReplicationRecord(*(np.concatenate(column) for column in zip(*parts)))


def summarize(record: ReplicationRecord, seed: int, null_decisions: Optional[np.ndarray] = None) -> RiskEstimate:
    null_decisions = record.null_decisions if null_decisions is None else null_decisions
    reps = len(record.alt_decisions)
    rejected = int(np.sum(null_decisions))
    accepted = int(reps - np.sum(record.alt_decisions))
    type1_ci = wilson_interval(rejected, reps)
    type2_ci = wilson_interval(accepted, reps)
    half_width = max(type1_ci[1] - type1_ci[0], type2_ci[1] - type2_ci[0]) / 2.0
    return RiskEstimate(rejected / reps, accepted / reps, reps, half_width, seed, type1_ci, type2_ci,
                        float(np.mean(record.norms_sq)), float(np.mean(record.admissible)))


def estimate_risk(spec: TestSpec, alt: Alternative, dims: ProblemDims, reps: int, seed: int, jobs: int = 1,
                  k_max: Optional[int] = None) -> RiskEstimate:
    """
    Estimates type I and type II errors of a calibrated test.

    Parameters
    ----------
    spec : TestSpec
        The calibrated test.
    alt : CoefficientMatrix, PriorSpec or None
        A fixed alternative, a prior drawn afresh each replication, or None for the null only
        (type II is then reported as 1 - power at zero signal).
    dims : ProblemDims
        Supplies p and n.
    reps : int
        Replications.
    seed : int
        The experiment seed.
    jobs : int
        Worker processes; the estimate does not depend on it.
    k_max : int, optional
        Rows simulated, max(4 nu, 64) by default.

    Returns
    -------
    RiskEstimate
        The risk report.

    Raises
    ------
    DimensionMismatch
        If the test or alternative does not fit the dimensions.
    """
    if alt is None:
        alt = CoefficientMatrix.zeros(1, dims.p, FiniteRankProfile(1))
    record = run_replications(spec, alt, dims, reps, seed, jobs, k_max)
    return summarize(record, seed)


@dataclass(frozen=True)
class PowerPoint:
    scale: float
    risk: RiskEstimate


def power_curve(spec: TestSpec, prior: PriorSpec, scales: Sequence[float], dims: ProblemDims, reps: int, seed: int,
                jobs: int = 1, k_max: Optional[int] = None) -> List[PowerPoint]:
    """
    Risk of a fixed test against the prior rescaled by each C in `scales`.

    The null replications are shared across the grid and every scale reuses the same random
    streams, so the curve varies only through the signal.
    """
    scales = list(scales)
    if any(c < 0 for c in scales) or any(b <= a for a, b in zip(scales, scales[1:])):
        raise ValueError(f'Scale grid must be nonnegative and increasing, got {scales}.')
    if k_max is None:
        k_max = max(default_k_max([spec.rows]), prior.rows)
    null = run_replications(spec, None, dims, reps, seed, jobs, k_max).null_decisions
    points = []
    for scale in scales:
        record = run_replications(spec, prior.scaled(scale), dims, reps, seed, jobs, k_max, with_null=False)
        risk = summarize(record, seed, null)
        stdout_logger.info(f'C={scale!r}: type I {risk.type1:.4f}, type II {risk.type2:.4f}.')
        points.append(PowerPoint(scale, risk))
    return points


def risk_trend(points: Sequence[PowerPoint]) -> float:
    """
    Spearman correlation between the scale and the total risk.
    """
    rho, _ = spearmanr([point.scale for point in points], [point.risk.total for point in points])
    return float(rho)


def empirical_crossover(points: Sequence[PowerPoint], target: float = 0.5) -> Optional[float]:
    """
    The scale at which total risk first falls to `target`, linearly interpolated between grid points.

    Parameters
    ----------
    points : sequence of PowerPoint
        A power curve over increasing scales.
    target : float
        The total risk level that marks the crossover.

    Returns
    -------
    float or None
        The interpolated scale, None when the risk never reaches `target` on the grid.
    """
    previous = None
    for point in points:
        total = point.risk.total
        if total <= target:
            if previous is None:
                return point.scale
            fraction = (previous.risk.total - target) / (previous.risk.total - total)
            return previous.scale + fraction * (point.scale - previous.scale)
        previous = point
    return None
