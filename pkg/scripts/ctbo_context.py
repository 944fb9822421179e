"""Contextual BO after a weight switch: how the regret increment depends on the new context.

Runs CTBO on Eggholder for a first phase with ``w = e1`` and a second phase with
each listed weight vector, then prints the mean cumulative-regret increment
accumulated after the switch.
"""

import argparse

import numpy as np

from vvbo.harness import ExperimentConfig, run_experiment

SWITCHES = {
    "e3": (0.0, 0.0, 1.0, 0.0, 0.0),
    "0.8e1+0.2e2": (0.8, 0.2, 0.0, 0.0, 0.0),
    "0.5e1+0.5e2": (0.5, 0.5, 0.0, 0.0, 0.0),
    "e2": (0.0, 1.0, 0.0, 0.0, 0.0),
}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--method", default="ctbo")
    p.add_argument("--before", type=int, default=50)
    p.add_argument("--after", type=int, default=30)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    for label, w in SWITCHES.items():
        cfg = ExperimentConfig("Eggholder", method=args.method, n_phases=2, iterations=(args.before, args.after),
                               weights=(None, w), n_runs=args.runs, seed=args.seed)
        res = run_experiment(cfg)
        inc = np.array([t.cumulative_regret[-1] - t.cumulative_regret[args.before - 1] for t in res.traces])
        print(f"e1 -> {label:<12} increment {inc.mean():9.2f} +- {inc.std():8.2f}")


if __name__ == "__main__":
    main()
