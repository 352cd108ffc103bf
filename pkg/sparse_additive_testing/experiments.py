import os
from typing import Callable, Dict, Optional

from sparse_additive_testing.config import ExperimentConfig, config_hash
from sparse_additive_testing.csv_output import provenance_line, write_csv
from sparse_additive_testing.database import CalibrationCache
from sparse_additive_testing.logging import stdout_logger
from sparse_additive_testing.montecarlo_harness import (U64,
                                                        calibrate_table,
                                                        empirical_crossover,
                                                        power_curve,
                                                        risk_trend,
                                                        run_replications,
                                                        summarize)
from sparse_additive_testing.priors_divergence import (PriorSpec,
                                                       adaptive_prior_c,
                                                       divergence_report,
                                                       minimax_prior_c,
                                                       prior_from_config,
                                                       trivial_prior_c)
from sparse_additive_testing.rate_calculus import (A_H, ProblemDims, Regime,
                                                   adaptation_condition,
                                                   lower_bound_rate,
                                                   minimax_rate,
                                                   select_regime)
from sparse_additive_testing.selfcheck import run_selfcheck
from sparse_additive_testing.statistics import (TestSpec, make_adaptive_test,
                                                make_dense_test,
                                                make_minimax_test,
                                                make_sobolev_adaptive_test,
                                                make_sparse_test,
                                                plan_adaptive_test,
                                                required_statistics)

"""
The experiment subcommands behind scripts/run_experiment.py.
"""

SUBCOMMANDS = ('rates', 'grids', 'simulate', 'calibrate', 'power', 'divergence', 'selfcheck')


def _provenance(config: Optional[ExperimentConfig], name: str) -> str:
    if config is None:
        return provenance_line(0, 'none', {'subcommand': name})
    return provenance_line(config.seed, config_hash(config), {'subcommand': name})


def _path(config: ExperimentConfig, out: Optional[str], name: str) -> str:
    return os.path.join(out or config.output, f'{name}.csv')


def fresh_seed(seed: int) -> int:
    """
    The seed for risk estimation, distinct from the calibration seed.
    """
    return (seed + 1) % U64


def build_test(config: ExperimentConfig, dims: ProblemDims, jobs: int = 1, cache: Optional[CalibrationCache] = None) -> TestSpec:
    """
    Calibrates and assembles the configured test family for one problem instance.
    """
    test, profile = config.test, config.profile
    if test.kind == 'sobolev_adaptive':
        return make_sobolev_adaptive_test(test.alpha0, test.alpha1, dims.p, dims.n, test.K, test.level,
                                          config.effective_calibration_reps, config.seed, jobs)
    constants = dict(K2=test.K2, K2_tail=test.K2_tail, K3=test.K3, D=test.D)
    if test.kind == 'adaptive':
        plan = plan_adaptive_test(profile, dims.p, dims.n, test.level, **constants)
        reps = config.calibration_reps_at(plan.component_level)
        table = calibrate_table(plan.statistics, dims, plan.component_level, reps, config.seed, jobs, cache=cache)
        return make_adaptive_test(profile, dims.p, dims.n, table, test.level, adaptation=plan.adaptation, **constants)
    statistics, level = required_statistics(test.kind, profile, dims, test.level, **constants)
    table = calibrate_table(statistics, dims, level, config.calibration_reps_at(level), config.seed, jobs, cache=cache)
    if test.kind == 'minimax':
        return make_minimax_test(profile, dims, table, level, **constants)
    if test.kind == 'dense':
        return make_dense_test(profile, dims, table, level)
    regime = select_regime(profile, dims, test.K3, test.D)
    if regime not in (Regime.SPARSE_BULK, Regime.SPARSE_TAIL):
        regime = Regime.SPARSE_BULK
    return make_sparse_test(profile, dims, regime, table, level, test.K2, test.K2_tail, test.D)


def default_amplitude(config: ExperimentConfig, dims: ProblemDims) -> float:
    """
    The configured prior amplitude, or the one the lower-bound argument prescribes at eta.
    """
    prior = config.prior
    if prior.c is not None:
        return prior.c
    if prior.kind == 'trivial':
        return trivial_prior_c(prior.eta, dims.log_term / dims.n)
    if prior.kind == 'adaptive':
        return adaptive_prior_c(prior.eta)
    return minimax_prior_c(prior.eta)


def build_prior(config: ExperimentConfig, dims: ProblemDims) -> PriorSpec:
    return prior_from_config(config.prior.kind, dims, config.profile, default_amplitude(config, dims), config.prior.options)


def run_rates(config: ExperimentConfig, out: Optional[str] = None, jobs: int = 1) -> int:
    header = ['p', 's', 'n', 'a', 'regime', 'nu', 'gamma', 'eps_sq', 'lower_bound']
    rows = []
    for dims in config.dims.instances():
        report = minimax_rate(config.profile, dims.with_budget(1.0), config.test.K3, config.test.D)
        rows.append([dims.p, dims.s, dims.n, dims.a, report.regime, report.nu, report.gamma, report.eps_sq,
                     lower_bound_rate(config.profile, dims.with_budget(1.0))])
    write_csv(_path(config, out, 'rates'), header, rows, _provenance(config, 'rates'))
    return 0


def run_grids(config: ExperimentConfig, out: Optional[str] = None, jobs: int = 1) -> int:
    header = ['p', 'n', 'a_star', 'bracket_lo', 'bracket_hi', 'V_H', 'S', 'tilde_V', 'condition_L1', 'condition_L2', 'condition_L4']
    rows = []
    for n in config.dims.n:
        report = A_H(config.profile, config.dims.p, n)
        condition = adaptation_condition(report.a_star, report.tilde_V)
        rows.append([config.dims.p, n, report.a_star, report.bracket[0], report.bracket[1], report.V_H, report.S,
                     report.tilde_V, condition[1.0], condition[2.0], condition[4.0]])
    write_csv(_path(config, out, 'grids'), header, rows, _provenance(config, 'grids'))
    return 0


def run_calibrate(config: ExperimentConfig, out: Optional[str] = None, jobs: int = 1) -> int:
    cache = CalibrationCache()
    header = ['p', 's', 'n', 'test', 'statistic', 'd', 'r', 'nu', 'level', 'threshold']
    rows = []
    for dims in config.dims.instances():
        spec = build_test(config, dims, jobs, cache)
        if config.test.kind == 'sobolev_adaptive':
            for nu, threshold in zip(spec.grid, spec.thresholds):
                rows.append([dims.p, dims.s, dims.n, config.test.kind, 'dense', None, None, nu, config.test.level, threshold])
            continue
        components = spec.components if hasattr(spec, 'components') else [None]
        for component in components:
            test = spec if component is None else component.test
            statistic = test.statistic
            rows.append([dims.p, dims.s, dims.n, config.test.kind, statistic.kind, getattr(statistic, 'd', None),
                         getattr(statistic, 'r', None), getattr(statistic, 'nu', None), config.test.level, test.threshold])
    write_csv(_path(config, out, 'calibration'), header, rows, _provenance(config, 'calibrate'))
    stdout_logger.info(f'Calibration cache now holds {cache.count()} thresholds.')
    return 0


def run_simulate(config: ExperimentConfig, out: Optional[str] = None, jobs: int = 1) -> int:
    cache = CalibrationCache()
    summary_header = ['p', 's', 'n', 'c', 'type1', 'type2', 'total', 'ci_half_width', 'type1_lo', 'type1_hi',
                      'type2_lo', 'type2_hi', 'mean_norm_sq', 'admissible_fraction', 'reps']
    summary, decisions = [], []
    seed = fresh_seed(config.seed)
    for dims in config.dims.instances():
        spec = build_test(config, dims, jobs, cache)
        prior = build_prior(config, dims)
        record = run_replications(spec, prior, dims, config.reps, seed, jobs)
        risk = summarize(record, seed)
        summary.append([dims.p, dims.s, dims.n, prior.c, risk.type1, risk.type2, risk.total, risk.ci_half_width,
                        risk.type1_ci[0], risk.type1_ci[1], risk.type2_ci[0], risk.type2_ci[1],
                        risk.mean_norm_sq, risk.admissible_fraction, risk.reps])
        for rep in range(config.reps):
            decisions.append([dims.p, dims.s, dims.n, rep, int(record.null_decisions[rep]), int(record.alt_decisions[rep]),
                              float(record.norms_sq[rep]), bool(record.admissible[rep])])
        stdout_logger.info(f'{dims}: type I {risk.type1:.4f}, type II {risk.type2:.4f} (+-{risk.ci_half_width:.4f}).')
    provenance = _provenance(config, 'simulate')
    write_csv(_path(config, out, 'simulate'), summary_header, summary, provenance)
    write_csv(_path(config, out, 'decisions'), ['p', 's', 'n', 'rep', 'null_decision', 'alt_decision', 'norm_sq', 'admissible'],
              decisions, provenance)
    return 0


def run_power(config: ExperimentConfig, out: Optional[str] = None, jobs: int = 1) -> int:
    cache = CalibrationCache()
    header = ['p', 's', 'n', 'scale', 'c', 'type1', 'type2', 'total', 'ci_half_width', 'mean_norm_sq', 'admissible_fraction']
    rows = []
    seed = fresh_seed(config.seed)
    for dims in config.dims.instances():
        spec = build_test(config, dims, jobs, cache)
        prior = build_prior(config, dims)
        points = power_curve(spec, prior, config.prior.scales, dims, config.reps, seed, jobs)
        for point in points:
            risk = point.risk
            rows.append([dims.p, dims.s, dims.n, point.scale, point.scale * prior.c, risk.type1, risk.type2, risk.total,
                         risk.ci_half_width, risk.mean_norm_sq, risk.admissible_fraction])
        if len(points) > 1:
            stdout_logger.info(f'{dims}: Spearman trend of total risk against C is {risk_trend(points):.3f}.')
        crossover = empirical_crossover(points)
        if crossover is None:
            stdout_logger.info(f'{dims}: total risk stays above 1/2 on the scale grid.')
        else:
            stdout_logger.info(f'{dims}: total risk crosses 1/2 near C={crossover:.3g}.')
    write_csv(_path(config, out, 'power'), header, rows, _provenance(config, 'power'))
    return 0


def run_divergence(config: ExperimentConfig, out: Optional[str] = None, jobs: int = 1) -> int:
    header = ['p', 's', 'n', 'prior', 'c', 'method', 'exact', 'upper_bound', 'mc_estimate', 'mc_standard_error',
              'target', 'risk_lower_bound']
    rows = []
    for dims in config.dims.instances():
        prior = build_prior(config, dims)
        report = divergence_report(prior, config.prior.eta, config.prior.mc_pairs, config.seed)
        rows.append([dims.p, dims.s, dims.n, config.prior.kind, prior.c, report.method, report.exact, report.upper_bound,
                     report.mc_estimate, report.mc_standard_error, report.target, report.risk_lower_bound])
    write_csv(_path(config, out, 'divergence'), header, rows, _provenance(config, 'divergence'))
    return 0


def run_selfcheck_command(config: Optional[ExperimentConfig], out: Optional[str] = None, jobs: int = 1) -> int:
    results = run_selfcheck()
    failed = [result.name for result in results if not result.passed]
    if out is not None or config is not None:
        path = os.path.join(out or config.output, 'selfcheck.csv')
        write_csv(path, ['check', 'passed', 'detail'], [[r.name, r.passed, r.detail] for r in results],
                  _provenance(config, 'selfcheck'))
    if failed:
        stdout_logger.error(f'Self-check failed: {", ".join(failed)}')
        return 1
    stdout_logger.info(f'All {len(results)} self-checks passed.')
    return 0


RUNNERS: Dict[str, Callable[..., int]] = {
    'rates': run_rates,
    'grids': run_grids,
    'simulate': run_simulate,
    'calibrate': run_calibrate,
    'power': run_power,
    'divergence': run_divergence,
    'selfcheck': run_selfcheck_command,
}


def run_subcommand(name: str, config: Optional[ExperimentConfig], out: Optional[str] = None, jobs: int = 1) -> int:
    """
    Runs one subcommand and writes its CSV artifacts.

    Parameters
    ----------
    name : str
        One of SUBCOMMANDS.
    config : ExperimentConfig, optional
        The validated config; only `selfcheck` runs without one.
    out : str, optional
        Overrides the config's output directory.
    jobs : int
        Worker processes for Monte Carlo work.

    Returns
    -------
    int
        The exit status, nonzero when a self-check fails.
    """
    if name not in RUNNERS:
        raise ValueError(f'Unknown subcommand {name!r}, expected one of {SUBCOMMANDS}.')
    if config is None and name != 'selfcheck':
        raise ValueError(f'The {name} subcommand needs a config.')
    stdout_logger.info(f'Running {name}.')
    return RUNNERS[name](config, out, jobs)
