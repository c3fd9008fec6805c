"""Spectral diagnostics across the SDD epsilon grid, with SVG charts."""

import argparse
import json

from poisonlab import harness


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--out", default="runs/diagnose")
    p.add_argument("--repeats", type=int, default=20)
    args = p.parse_args()
    cfg = harness.load_config("diagnose", overrides={"out": args.out, "repeats": args.repeats, "svg": True})
    res = harness.cmd_diagnose(cfg)
    print(json.dumps(harness._json_safe(res["summary"]), indent=2))


if __name__ == "__main__":
    main()
