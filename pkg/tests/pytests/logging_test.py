import logging

from sparse_additive_testing.logging import configure_logger, stdout_logger

"""
Tests for the package logger.
"""


def test_stdout_logger_is_configured():
    assert stdout_logger.name == 'sparse_additive_testing'
    assert len(stdout_logger.handlers) == 1


def test_configure_logger_reads_environment(monkeypatch):
    """
    Asserts:
        SAT_LOG_LEVEL sets the level, an explicit level wins, and handlers are never duplicated.
    """
    logger = logging.getLogger('sparse_additive_testing.logging_test')
    monkeypatch.setenv('SAT_LOG_LEVEL', 'warning')
    assert configure_logger(logger).level == logging.WARNING
    assert configure_logger(logger, 'debug').level == logging.DEBUG
    assert len(logger.handlers) == 1
    logger.handlers.clear()
