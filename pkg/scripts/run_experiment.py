import argparse
import logging
import sys
from typing import Optional

from sparse_additive_testing.config import ExperimentConfig, load_config
from sparse_additive_testing.experiments import SUBCOMMANDS, run_subcommand
from sparse_additive_testing.logging import stdout_logger

"""
Runs an experiment subcommand from a YAML config.
"""


def resolve_config(args: argparse.Namespace) -> Optional[ExperimentConfig]:
    """
    Loads the config and applies command line overrides.

    Parameters
    ----------
    args : argparse.Namespace
        The parsed args.

    Returns
    -------
    config : ExperimentConfig or None
        The config, None only for a selfcheck run without one.
    """
    if args.config is None:
        if args.subcommand != 'selfcheck':
            raise ValueError(f"'--config' is required for the {args.subcommand} subcommand")
        return None
    return load_config(args.config).with_overrides(seed=args.seed, output=args.out)


def run_experiment(args: argparse.Namespace) -> int:
    """
    Runs the requested subcommand.

    Parameters
    ----------
    args : argparse.Namespace
        The parsed args.

    Returns
    -------
    int
        The exit status.
    """
    if args.debug_sql:
        logging.getLogger('sqlalchemy.engine').setLevel(logging.INFO)
    config = resolve_config(args)
    return run_subcommand(args.subcommand, config, args.out, args.jobs)


def parse_args() -> argparse.Namespace:
    """
    Parses the required args.

    Returns
    -------
    args: argparse.Namespace
        The parsed args.
    """
    parser = argparse.ArgumentParser(
        prog='Runs sparse additive model detection experiments.',)
    parser.add_argument('subcommand', help='The experiment to run.', choices=SUBCOMMANDS)
    parser.add_argument('--config', help='Path to the YAML experiment config.')
    parser.add_argument('--seed', type=int, help='Overrides the config seed, an unsigned 64-bit integer.')
    parser.add_argument('--out', help='Overrides the output directory for CSV artifacts.')
    parser.add_argument('--jobs', type=int, default=1, help='Worker processes for Monte Carlo work.')
    parser.add_argument('--debug-sql', action='store_true', help='Enable SQL debugging')
    return parser.parse_args()


if __name__ == '__main__':
    provided_args = parse_args()
    try:
        status = run_experiment(provided_args)
    except Exception as e:
        stdout_logger.exception(f'{provided_args.subcommand} failed: {e}')
        sys.exit(1)
    if status != 0:
        sys.exit(status)
    stdout_logger.info('All done!')
