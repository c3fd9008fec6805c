"""Command line entry point: ``poisonlab <command> [--config FILE] ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .errors import InvalidConfig, PoisonLabError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poisonlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in harness.COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--seed", type=int)
        s.add_argument("--out")
        s.add_argument("--eps", type=float, nargs="+", help="override the epsilon grid")
        s.add_argument("--repeats", type=int)
        s.add_argument("--generator", choices=["dense", "sdd"])
        s.add_argument("--bundle", help="use an existing bundle instead of synthesizing")
        s.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                       help="override any config field, e.g. --set norm='\"frobenius\"'")
        s.add_argument("--svg", action="store_true", default=None)
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _overrides(args) -> dict:
    ov = {"seed": args.seed, "out": args.out, "epsilons": args.eps, "repeats": args.repeats,
          "generator": args.generator, "bundle": args.bundle, "svg": args.svg}
    for item in args.set:
        key, sep, val = item.partition("=")
        if not sep:
            raise InvalidConfig(f"--set expects KEY=JSON, got {item!r}")
        try:
            ov[key] = json.loads(val)
        except json.JSONDecodeError:
            ov[key] = val
    return ov


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = harness.load_config(args.command, args.config, _overrides(args))
    except InvalidConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        result = harness.COMMANDS[args.command](cfg)
    except InvalidConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except PoisonLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if args.command == "sweep" and result["failures"]:
        print(f"{len(result['failures'])} cell(s) failed; see summary.json", file=sys.stderr)
        return 2
    if args.command == "report":
        print(result)
    else:
        print(f"wrote {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
