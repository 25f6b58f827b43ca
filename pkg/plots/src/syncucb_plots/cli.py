"""Command line entry point: render figures from an aggregates CSV."""

import argparse
import os
import sys

from .figures import FORMATS, LAYOUTS, SeriesError, render

EXIT_OK = 0
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="syncucb-plots",
        description="Render regret-curve figures from an aggregates CSV.",
    )
    parser.add_argument("--input", required=True,
                        help="aggregates CSV, or a directory containing aggregates.csv")
    parser.add_argument("--out", required=True, help="output directory for images")
    parser.add_argument("--layout", choices=LAYOUTS, default="grid")
    parser.add_argument("--format", choices=FORMATS, default="svg")
    parser.add_argument("--logy", action="store_true", help="log-scale y axis")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    csv_path = args.input
    if os.path.isdir(csv_path):
        csv_path = os.path.join(csv_path, "aggregates.csv")
    if not os.path.exists(csv_path):
        print(f"error: no aggregates CSV at {csv_path}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        written = render(
            csv_path, args.out,
            layout=args.layout, image_format=args.format, logy=args.logy,
        )
    except SeriesError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
