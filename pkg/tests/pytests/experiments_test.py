import os

import numpy as np
import pytest

from sparse_additive_testing.config import load_config, parse_config
from sparse_additive_testing.csv_output import read_csv
from sparse_additive_testing.experiments import (build_test,
                                                 default_amplitude,
                                                 fresh_seed, run_subcommand)
from sparse_additive_testing.montecarlo_harness import wilson_interval
from sparse_additive_testing.priors_divergence import minimax_prior_c
from sparse_additive_testing.selfcheck import CheckResult
from sparse_additive_testing.statistics import (AdaptiveMax,
                                                SobolevDenseAdaptive,
                                                SparseThreshold)

"""
Tests for the experiment subcommands.
"""

CONFIG_DIR = os.path.join(os.path.dirname(__file__), '..', '..', 'configs')

SMALL = """
profile: {kind: sobolev, alpha: 1.0}
dims: {p: 20, s: [1], n: [100]}
test: {kind: minimax, level: 0.05}
prior: {kind: minimax, eta: 0.3, scales: [0.0, 4.0]}
reps: 100
calibration_reps: 200
seed: 3
"""


@pytest.fixture(autouse=True)
def cache_in_tmp(tmp_path, monkeypatch):
    monkeypatch.setenv('SAT_CACHE_URL', f'sqlite:///{tmp_path / "cache.sqlite"}')


def test_rates_sweep(tmp_path):
    """
    Test the `rates` subcommand on the Sobolev sweep config.

    Asserts:
        One row per n with a log-log slope of eps_sq near -0.8.
    """
    config = load_config(os.path.join(CONFIG_DIR, 'sobolev_rates.yaml'))
    assert run_subcommand('rates', config, str(tmp_path)) == 0
    rows = read_csv(str(tmp_path / 'rates.csv'))
    assert len(rows) == 11
    n = np.array([float(row['n']) for row in rows])
    eps_sq = np.array([float(row['eps_sq']) for row in rows])
    assert np.polyfit(np.log(n), np.log(eps_sq), 1)[0] == pytest.approx(-0.8, abs=0.05)
    assert {row['regime'] for row in rows} == {'Dense'}
    with open(tmp_path / 'rates.csv') as f:
        assert f.readline().startswith('# seed=0 config_hash=')


def test_grids(tmp_path):
    config = parse_config(SMALL.replace('n: [100]', 'n: [100, 1000]'))
    run_subcommand('grids', config, str(tmp_path))
    rows = read_csv(str(tmp_path / 'grids.csv'))
    assert len(rows) == 2
    assert all(float(row['a_star']) >= 1.0 for row in rows)
    assert all(row['condition_L4'] in ('True', 'False') for row in rows)


def test_divergence(tmp_path):
    """
    Asserts:
        A trivial prior at its prescribed amplitude has an exact divergence below 4 eta^2.
    """
    config = parse_config(SMALL.replace('prior: {kind: minimax', 'prior: {kind: trivial'))
    run_subcommand('divergence', config, str(tmp_path))
    row = read_csv(str(tmp_path / 'divergence.csv'))[0]
    assert row['method'] == 'Exact'
    assert float(row['exact']) <= float(row['target'])


def test_simulate(tmp_path):
    """
    Asserts:
        A summary row per instance and a decision row per replication.
    """
    config = parse_config(SMALL)
    run_subcommand('simulate', config, str(tmp_path))
    summary = read_csv(str(tmp_path / 'simulate.csv'))
    assert len(summary) == 1
    assert float(summary[0]['c']) == pytest.approx(minimax_prior_c(0.3))
    assert 0.0 <= float(summary[0]['type1']) <= 1.0
    decisions = read_csv(str(tmp_path / 'decisions.csv'))
    assert len(decisions) == 100
    assert {row['null_decision'] for row in decisions} <= {'0', '1'}


def test_power_and_calibrate(tmp_path):
    config = parse_config(SMALL)
    run_subcommand('calibrate', config, str(tmp_path))
    calibration = read_csv(str(tmp_path / 'calibration.csv'))
    assert [row['statistic'] for row in calibration] == ['sparse']
    run_subcommand('power', config, str(tmp_path))
    power = read_csv(str(tmp_path / 'power.csv'))
    assert [float(row['scale']) for row in power] == [0.0, 4.0]
    assert float(power[0]['mean_norm_sq']) == 0.0


def test_build_test_families():
    """
    Asserts:
        Each configured family resolves to its test type.
    """
    config = parse_config(SMALL)
    dims = config.dims.instances()[0]
    assert isinstance(build_test(config, dims), SparseThreshold)
    adaptive = parse_config(SMALL.replace('test: {kind: minimax', 'test: {kind: adaptive').replace('calibration_reps: 200', 'calibration_reps: 20000'))
    assert isinstance(build_test(adaptive, dims), AdaptiveMax)
    sobolev = parse_config(SMALL.replace('test: {kind: minimax', 'test: {kind: sobolev_adaptive, K: 2.0'))
    spec = build_test(sobolev, dims)
    assert isinstance(spec, SobolevDenseAdaptive)
    assert spec.K == 2.0


def test_default_amplitude():
    config = parse_config(SMALL)
    dims = config.dims.instances()[0]
    assert default_amplitude(config, dims) == pytest.approx(minimax_prior_c(0.3))
    fixed = parse_config(SMALL.replace('eta: 0.3', 'eta: 0.3, c: 0.25'))
    assert default_amplitude(fixed, dims) == 0.25


def test_fresh_seed_wraps():
    assert fresh_seed(0) == 1
    assert fresh_seed(2 ** 64 - 1) == 0


def test_selfcheck_exit_status(mocker, tmp_path):
    """
    Test the `selfcheck` subcommand with the checks mocked.

    Asserts:
        A failing check gives exit status 1; passing checks give 0 and a CSV when an output is set.
    """
    mocker.patch('sparse_additive_testing.experiments.run_selfcheck',
                 return_value=[CheckResult('special_values', True), CheckResult('rate_oracles', False, '3 violations')])
    assert run_subcommand('selfcheck', None) == 1
    mocker.patch('sparse_additive_testing.experiments.run_selfcheck', return_value=[CheckResult('special_values', True)])
    assert run_subcommand('selfcheck', None, str(tmp_path)) == 0
    assert read_csv(str(tmp_path / 'selfcheck.csv')) == [{'check': 'special_values', 'passed': 'True', 'detail': ''}]


def test_run_subcommand_errors():
    with pytest.raises(ValueError):
        run_subcommand('plot', parse_config(SMALL))
    with pytest.raises(ValueError):
        run_subcommand('rates', None)


@pytest.mark.slow
def test_selfcheck_passes():
    """
    Asserts:
        The full property suite passes.
    """
    assert run_subcommand('selfcheck', None) == 0


@pytest.mark.slow
def test_calibrated_minimax_test_holds_level(tmp_path):
    """
    Test the minimax test calibrated on 1e5 null draws against 1e4 fresh null replications.

    Asserts:
        The level lies inside the two-sided Wilson interval of the fresh type I error, and the written
        interval brackets the estimate.
    """
    config = parse_config(SMALL.replace('reps: 100', 'reps: 10000').replace('calibration_reps: 200', 'calibration_reps: 100000'))
    run_subcommand('simulate', config, str(tmp_path))
    summary = read_csv(str(tmp_path / 'simulate.csv'))[0]
    reps, type1 = int(summary['reps']), float(summary['type1'])
    assert reps == 10000
    assert float(summary['type1_lo']) <= type1 <= float(summary['type1_hi'])
    low, high = wilson_interval(round(type1 * reps), reps, alpha=0.01)
    assert low <= 0.05 <= high
