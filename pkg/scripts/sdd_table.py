"""Iterative-solver table on 20x20 SDD systems.

Median iterations to tolerance per solver, plus the solver-independent error
of the exact perturbed solution.
"""

import argparse

import numpy as np

from poisonlab import harness
from poisonlab.attacks import load_outcome, lp_objective
from poisonlab.datagen import read_bundle


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--out", default="runs/sdd_table")
    p.add_argument("--repeats", type=int, default=20)
    args = p.parse_args()
    cfg = harness.load_config("sweep", overrides={"repeats": args.repeats, "out": args.out})
    summary = harness.cmd_sweep(cfg)

    rows = {}
    for c in summary["cells"]:
        rows.setdefault((c["epsilon"], c["attack"]), {})[c["solver"]] = c["n_end"]
    solvers = sorted({c["solver"] for c in summary["cells"]})
    print(f"{'eps':>5} {'attack':>6} {'exact_err':>10} " + " ".join(f"{s:>11}" for s in solvers))
    for (eps, attack), by_solver in sorted(rows.items()):
        errs = []
        for seed in cfg.seeds():
            base = f"{args.out}/seeds/seed_{seed}"
            task = read_bundle(f"{base}/bundle")
            if eps == 0:
                delta = np.zeros_like(task.x_train)
            else:
                delta = load_outcome(f"{base}/attacks/{attack}_eps{eps:g}").delta
            errs.append(lp_objective(task, delta))
        print(f"{eps:>5g} {attack:>6} {np.median(errs):>10.4g} "
              + " ".join(f"{by_solver.get(s, float('nan')):>11g}" for s in solvers))


if __name__ == "__main__":
    main()
