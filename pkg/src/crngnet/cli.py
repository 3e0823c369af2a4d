"""Command-line entry point.

    crngnet <region|simulate|verify|bounds> --config PATH [--trials N] [--seed N]
            [--out DIR] [--threads N]

Exit codes: 0 success, 2 invalid input, 3 enumeration guard hit,
4 internal invariant breach.
"""
from __future__ import annotations

import argparse
import sys

from .config import COMMANDS, validate_spec
from .errors import InputError, InvariantError, ResourceLimitError
from .run import persist, run, with_overrides

EXIT_OK, EXIT_INPUT, EXIT_RESOURCE, EXIT_INVARIANT = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crngnet", description="Coset-code experiments on message access structures.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="experiment JSON file")
    p.add_argument("--trials", type=int, help="override run.trials")
    p.add_argument("--seed", type=int, help="override run.seed")
    p.add_argument("--out", default="crngnet-out", help="output directory (default: %(default)s)")
    p.add_argument("--threads", type=int, help="worker threads for simulation")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return EXIT_INPUT
    spec = validate_spec(text)
    if isinstance(spec, list):
        for msg in spec:
            print(f"{args.config}: {msg}", file=sys.stderr)
        return EXIT_INPUT
    try:
        spec = with_overrides(spec, args.trials, args.seed, args.threads)
        record = run(args.command, spec)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except ResourceLimitError as e:
        print(f"resource limit: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except (InvariantError, AssertionError) as e:
        print(f"invariant breach: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    paths = persist(record, args.out)
    print(f"{args.command}: config {record.config_hash[:12]} -> {', '.join(paths)}")
    if record.exit_code == EXIT_INVARIANT:
        print("invariant breach: see result.json for failing checks", file=sys.stderr)
    return record.exit_code


if __name__ == "__main__":
    sys.exit(main())
