#!/usr/bin/env python3
"""
snellforge - Optimal Stopping over Split Stopping Times

Command-line entry point of the laboratory.

Sub-commands:
    run    Solve one scenario (snell, rbsde, drbsde or enumerate) and write
           summary.json + nodes.csv to an output directory
    check  Run the invariant suite on a scenario, on seeded random scenarios,
           or replay a written report
    gen    Write a seeded random admissible scenario

Exit codes:
    0 success, 1 failed invariant or verification error, 2 validation error,
    3 convergence error

Usage:
    python main.py run scenarios/worked_tree.json --task snell --out out/worked
    python main.py check --random 50 --seed 42
    python main.py gen --steps 2 --branching 2 --seed 7 --out scenario.json
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, List, Optional

from config import settings
from core.exceptions import ConvergenceError, SnellforgeError, ValidationError, VerificationError
from pipelines import default_registry
from services import InvariantSuite, generate_scenario, load_scenario, summarize, write_scenario
from utils import setup_logger, get_logger, to_jsonable, write_json

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3

TASKS = ('snell', 'rbsde', 'drbsde', 'enumerate')

# Global logger
logger = get_logger('snellforge.main')


def emit(payload: Any) -> None:
    """Print a machine-readable JSON document on stdout."""
    print(json.dumps(to_jsonable(payload), indent=2, sort_keys=True))


def error_payload(error: SnellforgeError) -> dict:
    payload = {'error': type(error).__name__, 'message': str(error)}
    violations = getattr(error, 'violations', None)
    if violations:
        payload['violations'] = [v.to_dict() for v in violations]
    trace = getattr(error, 'trace', None)
    if trace is not None and hasattr(trace, 'to_dict'):
        payload['trace'] = trace.to_dict()
    return payload


def cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.file)
    out_dir = Path(args.out) if args.out else settings.OUTPUT_DIR / scenario.name
    pipeline = default_registry().create(args.task, out_dir)
    pipeline.run(scenario)
    logger.info(f"✓ Task '{args.task}' finished; report in {out_dir}")
    emit({'task': args.task, 'out': str(out_dir), 'summary_file': str(out_dir / 'summary.json')})
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    suite = InvariantSuite()
    reports = []
    if args.replay:
        reports.append(suite.replay(args.replay))
    if args.file:
        reports.append(suite.check_scenario(load_scenario(args.file)))
    if args.random is not None:
        reports.extend(suite.check_random(args.random, args.seed))

    summary = summarize(reports)
    if args.out:
        write_json(Path(args.out), summary)
    emit(summary)

    if summary['passed']:
        logger.info(f"✓ All invariants passed on {len(reports)} scenario(s)")
        return EXIT_OK
    logger.error(f"✗ Invariant failures in: {', '.join(summary['failed'])}")
    return EXIT_FAILED


def cmd_gen(args: argparse.Namespace) -> int:
    document = generate_scenario(args.steps, args.branching, args.seed, dt=args.dt, mixed=args.mixed)
    if args.out:
        path = write_scenario(args.out, document)
        logger.info(f"✓ Scenario written to {path}")
    else:
        emit(document)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='snellforge',
        description='Snell envelopes, Mertens decompositions and reflected BSDEs over split stopping times',
    )
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='solve one scenario and write a report')
    run.add_argument('file', help='scenario JSON file')
    run.add_argument('--task', choices=TASKS, required=True)
    run.add_argument('--out', help='output directory (default: SNELLFORGE_OUTPUT_DIR/<scenario name>)')
    run.set_defaults(handler=cmd_run)

    check = sub.add_parser('check', help='run the invariant suite')
    check.add_argument('file', nargs='?', help='scenario JSON file')
    check.add_argument('--random', type=int, metavar='N', help='number of seeded random scenarios')
    check.add_argument('--seed', type=int, default=0)
    check.add_argument('--replay', metavar='DIR', help='report directory written by run')
    check.add_argument('--out', help='also write the suite report to this file')
    check.set_defaults(handler=cmd_check)

    gen = sub.add_parser('gen', help='write a random admissible scenario')
    gen.add_argument('--steps', type=int, required=True)
    gen.add_argument('--branching', type=int, required=True)
    gen.add_argument('--seed', type=int, required=True)
    gen.add_argument('--dt', type=float, default=0.25)
    gen.add_argument('--mixed', action='store_true', help='draw each node\'s branching from 1..branching')
    gen.add_argument('--out', help='scenario file (stdout when omitted)')
    gen.set_defaults(handler=cmd_gen)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run the sub-command and map errors to exit codes.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == 'check' and not (args.file or args.random is not None or args.replay):
        parser.error("check needs a scenario file, --random N or --replay DIR")

    try:
        settings.validate()
    except ValueError as e:
        print(f"✗ Configuration error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    setup_logger('snellforge', level=settings.LOG_LEVEL, log_dir=settings.LOG_DIR or None)

    logger.info("=" * 60)
    logger.info(f"SNELLFORGE {args.command.upper()}")
    logger.info("=" * 60)

    try:
        return args.handler(args)
    except ValidationError as e:
        logger.error(f"✗ Validation failed: {e}")
        emit(error_payload(e))
        return EXIT_VALIDATION
    except ConvergenceError as e:
        logger.error(f"✗ No convergence: {e}")
        emit(error_payload(e))
        return EXIT_CONVERGENCE
    except VerificationError as e:
        logger.error(f"✗ Verification failed: {e}")
        emit(error_payload(e))
        return EXIT_FAILED
    except Exception as e:
        logger.error(f"✗ Unexpected error: {e}", exc_info=True)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
