import argparse

import pytest
from sqlalchemy import inspect

from scripts.database_setup import perform_database_action
from sparse_additive_testing import database
from sparse_additive_testing.rate_calculus import ProblemDims
from sparse_additive_testing.statistics import DenseStatistic, SparseStatistic

"""
Tests for the calibration cache management script.
"""


@pytest.fixture
def cache_url(tmp_path, monkeypatch):
    url = f'sqlite:///{tmp_path / "cache.sqlite"}'
    monkeypatch.setenv('SAT_CACHE_URL', url)
    return url


def make_args(operation: str, statistic_kind=None) -> argparse.Namespace:
    return argparse.Namespace(operation=operation, statistic_kind=statistic_kind, debug_sql=False)


def table_names() -> list:
    return inspect(database.get_database_session().kw.get('bind')).get_table_names()


def test_install_and_drop(cache_url):
    """
    Asserts:
        Install creates the calibration table and drop removes it.
    """
    perform_database_action(make_args('install'))
    assert table_names() == ['calibration_record']
    perform_database_action(make_args('drop'))
    assert table_names() == []


def test_status_and_clear(cache_url, caplog):
    """
    Test the `status` and `clear` operations.

    Asserts:
        Status logs the per-kind counts; clear deletes one kind or everything.
    """
    cache = database.CalibrationCache()
    dims = ProblemDims(10, 1, 10.0)
    cache.store(SparseStatistic(4, 1.0), dims, 0.05, 200, 0, 3.0)
    cache.store(SparseStatistic(4, 2.0), dims, 0.05, 200, 0, 1.0)
    cache.store(DenseStatistic(2), dims, 0.05, 200, 0, 40.0)
    assert cache.summary() == {'sparse': 2, 'dense': 1}

    with caplog.at_level('INFO', logger='sparse_additive_testing'):
        perform_database_action(make_args('status'))
    assert '3 cached thresholds' in caplog.text

    perform_database_action(make_args('clear', 'dense'))
    assert cache.summary() == {'sparse': 2}
    perform_database_action(make_args('clear'))
    assert cache.count() == 0


def test_unknown_operation(cache_url):
    with pytest.raises(ValueError):
        perform_database_action(make_args('vacuum'))
