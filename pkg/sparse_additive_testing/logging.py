import logging
import os
import sys
from typing import Optional

from dotenv import load_dotenv

"""
The package logger, writing to stdout at the SAT_LOG_LEVEL level (INFO unless set).
"""

load_dotenv()

LOG_FORMAT = '%(asctime)s [%(processName)s]: %(message)s'


def configure_logger(logger: logging.Logger, level: Optional[str] = None) -> logging.Logger:
    """
    Sets the level of `logger` and attaches a single stdout handler.

    Parameters
    ----------
    logger : logging.Logger
        The logger to configure.
    level : str, optional
        A logging level name; SAT_LOG_LEVEL or INFO when not given.

    Returns
    -------
    logging.Logger
        The same logger.
    """
    level = (level or os.getenv('SAT_LOG_LEVEL') or 'INFO').upper()
    logger.setLevel(level)
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stdout)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)
    return logger


stdout_logger = configure_logger(logging.getLogger('sparse_additive_testing'))
