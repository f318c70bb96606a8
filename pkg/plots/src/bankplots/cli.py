"""Command-line entry: plots <kind> --in CSV... --out PNG [--style KEY=VAL]"""

import argparse
import sys

from .render import KINDS, PlotJob, render
from .schemas import SchemaError


def _parse_style(pairs):
    style = {}
    for item in pairs:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ValueError(f"style option '{item}' is not KEY=VAL")
        try:
            style[key] = float(value)
        except ValueError:
            style[key] = value
    return style


def run_cli(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plots", description="Render figures from harness CSV files.")
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        metavar="CSV", help="input CSV file(s)")
    parser.add_argument("--out", required=True, metavar="PNG",
                        help="output image path")
    parser.add_argument("--style", action="append", default=[],
                        metavar="KEY=VAL", help="style override (repeatable)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        style = _parse_style(args.style)
        job = PlotJob(args.kind, tuple(args.inputs), args.out, style)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    try:
        render(job)
    except (SchemaError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
