import os

import pytest

from sparse_additive_testing.database import (CalibrationCache,
                                              CalibrationRecord, cache_url,
                                              calibration_key)
from sparse_additive_testing.montecarlo_harness import calibrate_table
from sparse_additive_testing.rate_calculus import ProblemDims
from sparse_additive_testing.statistics import DenseStatistic, SparseStatistic

"""
Tests for the calibration cache.
"""


@pytest.fixture
def cache(tmp_path, monkeypatch):
    """
    A cache backed by a SQLite file in a temporary directory.
    """
    monkeypatch.setenv('SAT_CACHE_URL', f'sqlite:///{tmp_path / "cache.sqlite"}')
    return CalibrationCache()


def test_cache_url_defaults_to_cache_dir(tmp_path, monkeypatch):
    """
    Asserts:
        Without SAT_CACHE_URL the cache is a SQLite file inside SAT_CACHE_DIR.
    """
    monkeypatch.delenv('SAT_CACHE_URL', raising=False)
    monkeypatch.setenv('SAT_CACHE_DIR', str(tmp_path / 'cache'))
    assert cache_url() == f'sqlite:///{os.path.join(str(tmp_path / "cache"), "calibration.sqlite")}'
    assert os.path.isdir(tmp_path / 'cache')


def test_calibration_key():
    """
    Asserts:
        The key changes with every input it depends on.
    """
    dims = ProblemDims(100, 1, 1000.0)
    base = calibration_key(SparseStatistic(8, 1.5), dims, 0.05, 1000, 0)
    assert base == calibration_key(SparseStatistic(8, 1.5), dims, 0.05, 1000, 0)
    assert base != calibration_key(SparseStatistic(8, 1.25), dims, 0.05, 1000, 0)
    assert base != calibration_key(DenseStatistic(8), dims, 0.05, 1000, 0)
    assert base != calibration_key(SparseStatistic(8, 1.5), dims, 0.01, 1000, 0)
    assert base != calibration_key(SparseStatistic(8, 1.5), dims, 0.05, 2000, 0)
    assert base != calibration_key(SparseStatistic(8, 1.5), dims, 0.05, 1000, 2 ** 63)
    assert base != calibration_key(SparseStatistic(8, 1.5), ProblemDims(100, 1, 999.0), 0.05, 1000, 0)


def test_store_and_lookup(cache):
    """
    Asserts:
        A stored threshold is found again, stored once, and other keys miss.
    """
    dims = ProblemDims(50, 2, 100.0)
    assert cache.lookup(DenseStatistic(4), dims, 0.05, 500, 1) is None
    cache.store(DenseStatistic(4), dims, 0.05, 500, 1, 231.5)
    cache.store(DenseStatistic(4), dims, 0.05, 500, 1, 231.5)
    assert cache.lookup(DenseStatistic(4), dims, 0.05, 500, 1) == 231.5
    assert cache.lookup(DenseStatistic(4), dims, 0.05, 500, 2) is None
    assert cache.count() == 1
    with cache.sessions.begin() as session:
        record = session.query(CalibrationRecord).one()
        assert record.statistic_kind == 'dense'
        assert record.nu == 4
        assert record.seed == '1'
        assert 'statistic_kind' in repr(record)


def test_calibration_reruns_hit_cache(cache):
    """
    Asserts:
        A second calibration reads the stored thresholds instead of simulating.
    """
    dims = ProblemDims(20, 1, 10.0)
    statistics = [SparseStatistic(8, 1.0), DenseStatistic(2)]
    first = calibrate_table(statistics, dims, 0.1, 200, seed=5, cache=cache)
    assert cache.count() == 2
    second = calibrate_table(statistics, dims, 0.1, 200, seed=5, cache=cache)
    assert first.entries == second.entries
    assert cache.count() == 2
