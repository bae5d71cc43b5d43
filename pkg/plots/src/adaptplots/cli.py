"""Figure CLI: ``plots render --spec <file>`` and ``plots all --in <dir> --out <dir>``."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .figures import load_spec, render, render_all


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plots", description="Render figures from experiment output CSVs"
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_render = sub.add_parser("render", help="render a single figure from a JSON spec")
    p_render.add_argument("--spec", required=True, help="path to a FigureSpec JSON file")

    p_all = sub.add_parser("all", help="regenerate the standard figure set")
    p_all.add_argument("--in", dest="in_dir", required=True, help="harness output directory")
    p_all.add_argument("--out", dest="out_dir", required=True, help="directory for images")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "render":
        result = render(load_spec(args.spec))
        print(f"wrote {result.path}")
        return 0
    if args.command == "all":
        results = render_all(args.in_dir, args.out_dir)
        for result in results:
            print(f"wrote {result.path}")
        print(f"{len(results)} figures")
        return 0
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
