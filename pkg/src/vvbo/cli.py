"""Command-line entry point: ``vvbo run | aggregate | oracle``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from .harness import ConfigError, ExperimentConfig, aggregate_dir, load_config, run_experiment


def _error(kind: str, message: str, code: int) -> int:
    print(json.dumps({"status": "error", "error": kind, "message": message}), file=sys.stderr)
    return code


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    out = args.out or config.output_dir
    if out is None:
        raise ConfigError("no output directory: pass --out or set output_dir")
    result = run_experiment(config, out, args.workers)
    summary = {"status": "ok" if not result.failures else "partial", "out": str(out),
               "runs": len(result.traces), "failed": [f["run"] for f in result.failures]}
    print(json.dumps(summary))
    return 0 if not result.failures else 1


def _cmd_aggregate(args) -> int:
    agg = aggregate_dir(args.input)
    print(json.dumps({"status": "ok", "iterations": len(agg)}))
    return 0


def _cmd_oracle(args) -> int:
    config = ExperimentConfig(args.benchmark, regime=args.regime, benchmark_seed=args.seed,
                              benchmark_seed_policy="fixed", integral_seed=args.integral_seed)
    bench = config.benchmark_instance()
    if not 1 <= args.phase <= len(bench.schedule.phases):
        raise ConfigError(f"phase must lie in 1..{len(bench.schedule.phases)}")
    x, F = bench.optimum_point(args.phase - 1)
    print(json.dumps({"benchmark": args.benchmark, "phase": args.phase, "x_star": x.tolist(), "F_star": F}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vvbo", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.add_argument("--workers", type=int)
    r.add_argument("--seed", type=int)
    r.set_defaults(func=_cmd_run)

    a = sub.add_parser("aggregate", help="recompute aggregate and plot data from per-run CSVs")
    a.add_argument("--in", dest="input", required=True)
    a.set_defaults(func=_cmd_aggregate)

    o = sub.add_parser("oracle", help="print the lattice optimum of one phase objective")
    o.add_argument("--benchmark", required=True)
    o.add_argument("--phase", type=int, required=True)
    o.add_argument("--regime", default="full", choices=("full", "partial"))
    o.add_argument("--seed", type=int, default=0, help="frozen benchmark seed")
    o.add_argument("--integral-seed", type=int, default=1)
    o.set_defaults(func=_cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        return _error("config", str(exc), 2)
    except FileNotFoundError as exc:
        return _error("not_found", str(exc), 2)
    except Exception as exc:  # noqa: BLE001
        return _error(type(exc).__name__, str(exc), 1)


if __name__ == "__main__":
    sys.exit(main())
