"""Direct-solver table: dense 6x3 regression, LP vs UP, NES fits.

Prints median test error, relative solution error and condition number per
(epsilon, attack) and writes the per-seed metrics under --out.
"""

import argparse

from poisonlab import harness


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--out", default="runs/dense_table")
    p.add_argument("--repeats", type=int, default=20)
    args = p.parse_args()
    cfg = harness.load_config("sweep", overrides={
        "generator": "dense", "repeats": args.repeats, "out": args.out,
        "epsilons": [0.01, 0.1, 0.5, 1.0], "solvers": [{"kind": "NES"}],
    })
    summary = harness.cmd_sweep(cfg)
    print(f"{'eps':>6} {'attack':>6} {'abs_err':>12} {'sol_err_rel':>12} {'kappa':>12} {'conv':>5}")
    for c in summary["cells"]:
        print(f"{c['epsilon']:>6g} {c['attack']:>6} {c['abs_err']:>12.4g} {c['sol_err_rel']:>12.4g} "
              f"{c['kappa']:>12.4g} {c['converged_frac']:>5.2f}")


if __name__ == "__main__":
    main()
