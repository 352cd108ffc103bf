import argparse

from sparse_additive_testing import database
from sparse_additive_testing.logging import stdout_logger

"""
Manages the calibration cache tables.
"""

OPERATIONS = ('install', 'drop', 'status', 'clear')


def perform_database_action(args: argparse.Namespace) -> None:
    """
    Performs a cache operation based on the provided arguments.

    Parameters
    ----------
    args : argparse.Namespace
        The parsed args.
    """
    if args.operation not in OPERATIONS:
        raise ValueError(f"'operation' must be one of {OPERATIONS}")
    sessions = database.get_database_session(echo=args.debug_sql)
    engine = sessions.kw.get('bind')
    if args.operation == 'install':
        stdout_logger.info(f'Installing calibration cache tables at {engine.url}.')
        database.Base.metadata.create_all(engine)
    elif args.operation == 'drop':
        stdout_logger.info(f'Dropping calibration cache tables at {engine.url}.')
        database.Base.metadata.drop_all(bind=engine)
    elif args.operation == 'status':
        summary = database.CalibrationCache(sessions).summary()
        stdout_logger.info(f'{sum(summary.values())} cached thresholds at {engine.url}.')
        for kind, count in sorted(summary.items()):
            stdout_logger.info(f'  {kind}: {count}')
    else:
        deleted = database.CalibrationCache(sessions).clear(args.statistic_kind)
        stdout_logger.info(f'Deleted {deleted} cached thresholds.')
    stdout_logger.info('All done!')


def parse_args() -> argparse.Namespace:
    """
    Parses the required args.

    Returns
    -------
    args: argparse.Namespace
        The parsed args.
    """
    parser = argparse.ArgumentParser(
        prog='Manages the calibration cache.',)
    parser.add_argument('operation', help='The cache operation to perform.', choices=OPERATIONS)
    parser.add_argument('--statistic-kind', choices=['sparse', 'dense'],
                        help='Restricts clear to one statistic kind.')
    parser.add_argument('--debug-sql', action='store_true', help='Enable SQL debugging')
    return parser.parse_args()


if __name__ == '__main__':
    provided_args = parse_args()
    perform_database_action(provided_args)
