"""Average regret R_T / T of single-phase vvBO as the horizon grows."""

import argparse

import numpy as np

from vvbo.harness import ExperimentConfig, run_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--benchmark", default="GP")
    p.add_argument("--horizon", type=int, default=100)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--beta", choices=("table", "theory"), default="table")
    args = p.parse_args()

    cfg = ExperimentConfig.from_dict({"benchmark": args.benchmark, "n_phases": 1, "iterations": args.horizon,
                                      "n_runs": args.runs, "beta": {"source": args.beta}})
    res = run_experiment(cfg)
    R = np.stack([t.cumulative_regret for t in res.traces]).mean(axis=0)
    for T in sorted({10, 20, 50, args.horizon} & set(range(1, args.horizon + 1))):
        print(f"T={T:4d}  R_T={R[T - 1]:9.3f}  R_T/T={R[T - 1] / T:.4f}")


if __name__ == "__main__":
    main()
