"""Command line entry point: ``excursion <command> --config FILE [--seed N]``.

Exit codes: 0 success, 2 invalid configuration or input, 3 acceptance floor
or trial cap breached, 4 numerical failure (quadrature did not converge or a
degenerate critical point), 5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import COMMANDS, ConfigError, _jsonable, default_workers, load_config
from .field import AcceptanceFloorError
from .limit import QuadratureError
from .morse import DegenerateCritical

EXIT_OK, EXIT_CONFIG, EXIT_FLOOR, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4, 5


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="excursion", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--workers", type=int, default=None, help="parallel workers (default: available CPUs)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="extra config entries")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        extra = dict(kv.split("=", 1) for kv in args.set)
    except ValueError:
        print("error: --set expects KEY=VALUE", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, **extra, seed=args.seed, out=args.out)
        workers = args.workers or default_workers()
        result = COMMANDS[args.command](cfg, workers)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AcceptanceFloorError as exc:
        print(f"acceptance floor: {exc}", file=sys.stderr)
        return EXIT_FLOOR
    except (QuadratureError, DegenerateCritical) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.verbose:
        print(json.dumps(_jsonable(result), indent=2, sort_keys=True, default=str))
    return EXIT_OK


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
