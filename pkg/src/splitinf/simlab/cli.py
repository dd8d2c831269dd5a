"""Command-line entry point: ``splitinf <experiment> [options]``.

Exit status is 0 on success, 1 for configuration errors and 2 when a run
exhausts its numerical failure budget.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from ..errors import DomainError, FailureBudgetExceeded, InsufficientConditioning
from .config import default_config, load_config
from .experiments import run_experiment
from .tables import version_string

log = logging.getLogger("splitinf")

COMMANDS = {
    "power": "power",
    "stability": "stability",
    "coverage-coef": "coverage_coef",
    "coverage-proj": "coverage_projection",
    "theorem1": "theorem1",
    "prop1": "prop1",
}

# flag -> config field
OVERRIDES = {
    "seed": "seed", "reps": "n_reps", "n": "n", "p": "p", "rho": "rho", "f": "f",
    "selector": "selector", "q": "knockoff_q", "pfer": "pfer", "cutoff": "cutoff",
    "alpha": "alpha",
}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splitinf", description="Data splitting versus randomisation simulation studies.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("version", help="print the package version")
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} study")
        p.add_argument("--config", help="flat YAML file with configuration keys")
        p.add_argument("--seed", type=int)
        p.add_argument("--reps", type=int, help="replications (datasets for stability)")
        p.add_argument("--out", help="output directory (default: config output_path)")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--n", type=int)
        p.add_argument("--p", type=int)
        p.add_argument("--rho", type=float)
        p.add_argument("--f", type=float)
        p.add_argument("--selector", choices=("knockoff", "stability"))
        p.add_argument("--q", type=float, help="knockoff target FDR")
        p.add_argument("--pfer", type=float)
        p.add_argument("--cutoff", type=float)
        p.add_argument("--alpha", type=float)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "version":
        print(version_string())
        return 0

    experiment = COMMANDS[args.command]
    overrides = {field: getattr(args, flag) for flag, field in OVERRIDES.items()}
    try:
        if args.config:
            cfg = load_config(args.config, experiment, **overrides)
        else:
            selector = overrides.pop("selector")
            cfg = default_config(experiment, selector=selector, **overrides)
        if args.workers < 1:
            raise DomainError("--workers must be at least 1")
    except (DomainError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    out = args.out or cfg.output_path
    try:
        tables = run_experiment(cfg, workers=args.workers)
    except (FailureBudgetExceeded, InsufficientConditioning) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    for table in tables:
        path = table.write(out)
        log.info("wrote %s", path)
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
