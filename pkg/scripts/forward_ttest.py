"""Forward-bound campaign on 3x3 dense systems with the one-sided t-test."""

import argparse
import json

from poisonlab import harness


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--out", default="runs/forward")
    p.add_argument("--all-checks", action="store_true", help="also run the GD envelope and LP divergence checks")
    args = p.parse_args()
    checks = ["forward", "gd_envelope", "lp_divergence"] if args.all_checks else ["forward"]
    cfg = harness.load_config("verify-bounds", overrides={"out": args.out, "checks": checks})
    res = harness.cmd_verify_bounds(cfg)
    print(json.dumps(harness._json_safe(res), indent=2))


if __name__ == "__main__":
    main()
