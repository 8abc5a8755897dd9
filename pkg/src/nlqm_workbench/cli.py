"""Command-line entry point.

Exit codes: 0 all invariants pass, 1 an invariant failed, 2 invalid config,
3 scenario-level error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

SUBCOMMANDS = ("geometry", "connect", "transport", "bitensor", "dynamics", "reassemble", "audit")
EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_SCENARIO = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON scenario config")
    common.add_argument("--out", help="output directory for CSV, summary and result files")
    common.add_argument("--seed", type=int, help="64-bit seed (overrides the config)")
    common.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    p = argparse.ArgumentParser(prog="nlqm-bench", description="Run workbench scenarios.", parents=[common])
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=f"run a {name} scenario")
    sub.add_parser("schema", help="print the config JSON schema")
    return p


def _cap_threads(n):
    if n is None:
        return
    if n < 1:
        raise ValueError("--threads must be positive")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        _cap_threads(args.threads)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    # heavy imports after the thread cap is in the environment
    from .errors import ConfigInvalid, WorkbenchError
    from .scenarios import config_schema, run_scenario, validate_config

    if args.command == "schema":
        print(json.dumps(config_schema(), indent=2, sort_keys=True))
        return EXIT_OK

    overrides = {"seed": args.seed, "out": args.out}
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        raw = text
    else:
        raw = {"scenario": args.command}
    cfg, issues = validate_config(raw, overrides)
    if cfg is not None and cfg.scenario != args.command:
        issues = [f"$.scenario: config declares '{cfg.scenario}' but the subcommand is '{args.command}'"]
        cfg = None
    if cfg is None:
        for line in issues:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        report = run_scenario(cfg)
    except ConfigInvalid as exc:
        for line in exc.issues or [str(exc)]:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except WorkbenchError as exc:
        print(f"scenario error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except (ValueError, ArithmeticError, MemoryError) as exc:
        print(f"scenario error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    sys.stdout.write(report.summary())
    return EXIT_OK if report.passed else EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
