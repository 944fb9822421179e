"""Run every method on one benchmark and write a combined long-format plot table.

Example::

    python3 scripts/compare_methods.py --benchmark GP --regime full --out results/gp_full
"""

import argparse
import csv
import json
from pathlib import Path

import numpy as np

from vvbo.harness import METHODS, PLOT_COLUMNS, ExperimentConfig, run_experiment

PARTIAL_METHODS = ("vvbo", "mtbo", "rmtbo", "rbo")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--benchmark", default="GP")
    p.add_argument("--regime", default="full", choices=("full", "partial"))
    p.add_argument("--methods", nargs="*")
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, required=True)
    args = p.parse_args()

    methods = args.methods or (METHODS if args.regime == "full" else PARTIAL_METHODS)
    combined, summary = [], {}
    for method in methods:
        cfg = ExperimentConfig(args.benchmark, method=method, regime=args.regime, iterations=args.iterations,
                               n_runs=args.runs, seed=args.seed, workers=args.workers)
        res = run_experiment(cfg, args.out / method)
        with open(args.out / method / "plotdata.csv", encoding="utf-8", newline="") as fh:
            combined += list(csv.reader(fh))[1:]
        summary[method] = {
            "final_cumulative_regret": float(np.mean([t.cumulative_regret[-1] for t in res.traces])),
            "final_simple_regret": float(np.mean([t.simple_regret[-1] for t in res.traces])),
            "failed_runs": [f["run"] for f in res.failures],
        }
        print(f"{method:>6}  R_T={summary[method]['final_cumulative_regret']:10.3f}  "
              f"r_T={summary[method]['final_simple_regret']:.5f}")

    with open(args.out / "plotdata.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        w.writerows(combined)
    (args.out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
