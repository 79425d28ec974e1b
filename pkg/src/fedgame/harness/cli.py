"""Command line entry points.

One subcommand per experiment kind plus ``plotdata`` for rendering a
finished sweep.  Failures map to stable exit codes: 2 configuration,
3 divergence, 4 payment schedule refusal, 5 statistics, 1 anything
else the library rejected.
"""

from __future__ import annotations

import argparse
import os
import sys

from .. import __version__
from ..errors import ConfigurationError, FedGameError
from .config import parse_config
from .experiments import run_experiment
from .plotdata import emit_plotdata

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedgame",
        description="simulate payment-aligned federated learning and the "
                    "strategic mean estimation game")
    parser.add_argument("--version", action="version",
                        version=f"fedgame {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for kind, text in (("run", "run one protocol trajectory"),
                       ("sweep", "grid deviation strategies against payment levels"),
                       ("bounds", "check closed-form bounds against simulation"),
                       ("meanest", "solve the strategic mean estimation game")):
        p = sub.add_parser(kind, help=text)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--jobs", type=int, default=1,
                       help="worker processes for sweep grids")

    p = sub.add_parser("plotdata", help="render figures from a sweep CSV")
    p.add_argument("--sweep", required=True, help="sweep.csv from a sweep run")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "plotdata":
            committed = emit_plotdata(args.sweep, args.out)
        else:
            config = parse_config(args.config)
            if config.kind != args.command:
                raise ConfigurationError(
                    f"config kind {config.kind!r} does not match "
                    f"subcommand {args.command!r}")
            committed = run_experiment(config, args.out, seed=args.seed,
                                       jobs=args.jobs)
        for name in committed:
            print(f"wrote {os.path.join(args.out, name)}")
        return 0
    except FedGameError as exc:
        print(f"fedgame: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
