"""
Main entry point for the stable-drift kernel verification runs.

This module provides the command-line interface:
- run: execute the checks of an experiment configuration and write the manifest
- report: print the summary table of a finished run
"""

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from src.data.experiment_config import ExperimentConfig
from src.data.storage import load_manifest, summary_table
from src.errors import ConfigError, ManifestError
from src.verify.harness import run_experiment

OUTPUT_ENV = 'STABLE_DRIFT_OUT'

EXIT_OK = 0
EXIT_FAILED_CHECKS = 1
EXIT_CONFIG_ERROR = 2
EXIT_ERROR = 3


def create_parser() -> argparse.ArgumentParser:
    """
    Create and configure the argument parser.

    Returns:
        argparse.ArgumentParser: Configured argument parser
    """
    parser = argparse.ArgumentParser(description='Stable-drift heat kernel verification')
    parser.add_argument('--verbose', action='store_true', help='Log at DEBUG level')
    subparsers = parser.add_subparsers(dest='mode', help='Operation mode')

    # Run mode
    run_parser = subparsers.add_parser('run', help='Run the checks of a configuration')
    run_parser.add_argument('config', help='Path to the JSON experiment configuration')
    run_parser.add_argument('--workers', type=int, default=1,
                            help='Number of parallel workers')
    run_parser.add_argument('--out', help=f'Output directory (overrides ${OUTPUT_ENV})')

    # Report mode
    report_parser = subparsers.add_parser('report', help='Summarize a finished run')
    report_parser.add_argument('run_dir', help='Run directory or manifest file')

    return parser


def output_directory(args: argparse.Namespace, config: ExperimentConfig) -> str:
    """--out, then the environment override, then the configuration."""
    return args.out or os.environ.get(OUTPUT_ENV) or config.output_dir


def run_run_mode(args: argparse.Namespace) -> int:
    """
    Run the checks of a configuration.

    Args:
        args: Command line arguments for run mode

    Returns:
        int: exit status
    """
    if args.workers < 1:
        raise ConfigError('--workers', f"need at least one worker, got {args.workers}")
    config = ExperimentConfig.from_json(args.config)
    logging.info(f"Configuration {config.hash_prefix}: {len(config.checks)} checks, "
                 f"d={config.params.d}, alpha={config.params.alpha}, domain {config.domain.kind}")
    path, manifest = run_experiment(config, args.workers, output_directory(args, config))
    print(f"Manifest written to {path}")
    return EXIT_OK if manifest['overall_pass'] else EXIT_FAILED_CHECKS


def render_summary(run_dir: str) -> str:
    """Summary table of a run, one row per check in check_id order."""
    manifest = load_manifest(run_dir)
    table = summary_table(manifest['reports'])
    verdict = 'PASS' if manifest['overall_pass'] else 'FAIL'
    return (f"config {manifest['config_hash'][:12]}  overall {verdict}\n"
            + table.to_string(index=False, na_rep='-', float_format=lambda v: f"{v:.6g}"))


def run_report_mode(args: argparse.Namespace) -> int:
    """
    Print the summary of a finished run.

    Args:
        args: Command line arguments for report mode

    Returns:
        int: exit status
    """
    print(render_summary(args.run_dir))
    return EXIT_OK if load_manifest(args.run_dir)['overall_pass'] else EXIT_FAILED_CHECKS


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Main entry point.
    Parses command line arguments and runs the appropriate mode.
    """
    parser = create_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s %(levelname)s %(message)s')

    if not args.mode:
        parser.print_help()
        return EXIT_CONFIG_ERROR

    mode_handlers = {
        'run': run_run_mode,
        'report': run_report_mode,
    }

    try:
        return mode_handlers[args.mode](args)
    except ConfigError as e:
        logging.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG_ERROR
    except ManifestError as e:
        logging.error(f"Cannot read run: {e}")
        return EXIT_ERROR
    except Exception as e:
        logging.error(f"Error: {e}")
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
