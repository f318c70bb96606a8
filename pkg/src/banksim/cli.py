"""Command-line entry point.

Subcommands map one-to-one onto the experiment harness: simulate,
meanfield, particles, converge, capital, chaos, stability.  Every run
writes a manifest.json first, then the data files, all inside --out.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .experiments import run_experiment
from .model import DomainError

_SUBCOMMANDS = ("simulate", "meanfield", "particles", "converge",
                "capital", "chaos", "stability")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="banksim",
        description="Simulation and analysis of a banking system with "
                    "births, defaults, and default contagion.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="TOML config file")
        p.add_argument("--out", default=os.environ.get("BANKSIM_OUT", "results"),
                       help="output directory (default: results, or $BANKSIM_OUT)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                       help="parallel worker count")
        p.add_argument("--verbose", action="store_true")
    return parser


def run_cli(argv=None) -> int:
    """Execute one subcommand; returns the process exit code.

    0 on success, 1 on a domain/runtime error inside the experiment, 2 on
    configuration problems (unreadable or invalid config, bad flags).
    """
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        with open(args.config, "rb") as fh:
            config = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as e:
        print(f"error: cannot read config {args.config}: {e}", file=sys.stderr)
        return 2

    config.setdefault("experiment", {})
    config["experiment"]["kind"] = args.command

    try:
        outputs, manifest = run_experiment(config, seed_override=args.seed,
                                           threads=args.threads)
    except (KeyError, ValueError) as e:
        # missing/invalid config keys surface as config errors
        if isinstance(e, DomainError):
            print(f"error: {e}", file=sys.stderr)
            return 1
        print(f"error: invalid config: {e!r}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    os.makedirs(args.out, exist_ok=True)
    manifest_path = os.path.join(args.out, "manifest.json")
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    for name, content in sorted(outputs.items()):
        with open(os.path.join(args.out, name), "w") as fh:
            fh.write(content)
    if args.verbose:
        print(f"wrote manifest.json and {len(outputs)} file(s) to {args.out}")
    return 0


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
