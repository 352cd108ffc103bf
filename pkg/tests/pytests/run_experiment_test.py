import argparse
import logging
import sys

import pytest

from scripts.run_experiment import parse_args, resolve_config, run_experiment

"""
Tests for the experiment runner script.
"""

CONFIG = """
profile: {kind: finite_rank, m: 1}
dims: {p: 16, s: [1], n: [100]}
reps: 100
seed: 4
"""


def make_args(**overrides) -> argparse.Namespace:
    args = dict(subcommand='rates', config=None, seed=None, out=None, jobs=1, debug_sql=False)
    args.update(overrides)
    return argparse.Namespace(**args)


def test_parse_args(mocker):
    """
    Test the `parse_args` function.

    Parameters
    ----------
    mocker : pytest_mock.plugin.MockerFixture
        Mocker fixture.
    """
    mocker.patch.object(sys, 'argv', ['run_experiment.py', 'power', '--config', 'c.yaml', '--seed', '9', '--jobs', '4', '--debug-sql'])
    args = parse_args()
    assert args.subcommand == 'power'
    assert args.config == 'c.yaml'
    assert args.seed == 9
    assert args.jobs == 4
    assert args.debug_sql
    assert args.out is None


def test_parse_args_rejects_unknown_subcommand(mocker):
    mocker.patch.object(sys, 'argv', ['run_experiment.py', 'plot'])
    with pytest.raises(SystemExit):
        parse_args()


def test_resolve_config(tmp_path):
    """
    Asserts:
        Only selfcheck runs without a config, and command line values override the file.
    """
    with pytest.raises(ValueError):
        resolve_config(make_args())
    assert resolve_config(make_args(subcommand='selfcheck')) is None

    path = tmp_path / 'config.yaml'
    path.write_text(CONFIG)
    config = resolve_config(make_args(config=str(path)))
    assert config.seed == 4
    assert config.output == 'results'
    config = resolve_config(make_args(config=str(path), seed=12, out=str(tmp_path / 'out')))
    assert config.seed == 12
    assert config.output == str(tmp_path / 'out')


def test_run_experiment(mocker, tmp_path):
    """
    Test the `run_experiment` function.

    Parameters
    ----------
    mocker : pytest_mock.plugin.MockerFixture
        Mocker fixture.
    """
    path = tmp_path / 'config.yaml'
    path.write_text(CONFIG)
    mock_run_subcommand = mocker.patch('scripts.run_experiment.run_subcommand', return_value=0)
    args = make_args(subcommand='grids', config=str(path), out='results', jobs=3, debug_sql=True)

    assert run_experiment(args) == 0

    called_config = mock_run_subcommand.call_args.args[1]
    assert mock_run_subcommand.call_args.args[0] == 'grids'
    assert called_config.output == 'results'
    assert mock_run_subcommand.call_args.args[2:] == ('results', 3)
    assert logging.getLogger('sqlalchemy.engine').level == logging.INFO
    logging.getLogger('sqlalchemy.engine').setLevel(logging.NOTSET)
