"""Command line interface.

Subcommands:

- ``causal-adapt run --config <path> [--out <dir>] [--seed <s>]``
- ``causal-adapt check --family categorical|gaussian --k <K> --cases <n> --seed <s>``
- ``causal-adapt bayes-error --k <K> --trials <n> [--seed <s>]``
- ``causal-adapt radius-study --k <K> --draws <n> [--seed <s>] [--out <csv>]``
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .categorical import estimate_bayes_error, radius_estimate
from .checks import check_properties
from .harness import load_config, radius_study, run_experiment, _write_csv, _fmt
from .sampling import RngStream


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causal-adapt",
        description="Adaptation-speed experiments for cause-effect models",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("--config", required=True, help="flat key = value config file")
    p_run.add_argument("--out", help="output directory (overrides config)")
    p_run.add_argument("--seed", type=int, help="seed (overrides config)")

    p_check = sub.add_parser("check", help="run the invariant suites")
    p_check.add_argument("--family", required=True, choices=("categorical", "gaussian"))
    p_check.add_argument("--k", type=int, required=True)
    p_check.add_argument("--cases", type=int, default=100)
    p_check.add_argument("--seed", type=int, default=0)

    p_bayes = sub.add_parser(
        "bayes-error", help="estimate the direction-classification error"
    )
    p_bayes.add_argument("--k", type=int, required=True)
    p_bayes.add_argument("--trials", type=int, required=True)
    p_bayes.add_argument("--seed", type=int, default=0)

    p_rad = sub.add_parser(
        "radius-study", help="sample advantage-sphere radii for both priors"
    )
    p_rad.add_argument("--k", type=int, required=True)
    p_rad.add_argument("--draws", type=int, default=1000)
    p_rad.add_argument("--seed", type=int, default=0)
    p_rad.add_argument("--out", help="write rows to this CSV file")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        config = load_config(args.config)
        if args.out is not None:
            config.out_dir = args.out
        if args.seed is not None:
            config.seed = args.seed
        records = run_experiment(config)
        print(f"wrote {len(records)} runs to {config.resolved().out_dir}")
        return 0
    if args.command == "check":
        report = check_properties(args.family, args.k, args.cases, args.seed)
        for line in report.lines():
            print(line)
        return 0 if report.ok else 1
    if args.command == "bayes-error":
        err = estimate_bayes_error(args.k, args.trials, RngStream(args.seed))
        print(f"bayes error at K={args.k}: {err:.6f} ({args.trials} trials)")
        return 0
    if args.command == "radius-study":
        rows = radius_study(args.k, args.draws, RngStream(args.seed).child("radius"))
        for prior in ("dense", "sparse"):
            vals = np.array([r[1] for r in rows if r[0] == prior])
            devs = np.array([r[2] for r in rows if r[0] == prior])
            print(
                f"{prior}: median r_squared {np.median(vals):.4g} "
                f"(closed-form estimate {radius_estimate(args.k, prior):.4g}), "
                f"median deviation_sq {np.median(devs):.4g}"
            )
        if args.out:
            out = Path(args.out)
            out.parent.mkdir(parents=True, exist_ok=True)
            _write_csv(
                out,
                "prior,r_squared,deviation_sq",
                [(p, _fmt(r2), _fmt(d)) for p, r2, d in rows],
            )
            print(f"wrote {out}")
        return 0
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
