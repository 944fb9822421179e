"""Experiment configuration, seeded multi-run execution and CSV output.

Output layout of one experiment directory::

    manifest.json        resolved configuration, frozen seeds, oracle values
    runs/run_000.csv     one per run (run_007.failed marks a crashed run)
    aggregate.csv        per-iteration mean and std over successful runs
    plotdata.csv         long format (method, benchmark, regime, iteration, metric, mean, std)
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .acquisition import (
    TRACE_COLUMNS,
    Grid,
    LinearObjective,
    LinearObserver,
    MultiStart,
    PhaseSetup,
    RegretTrace,
    VectorLearner,
    compute_regret,
    default_optimizer,
    run_loop,
)
from .baselines import ScalarTask, run_bo, run_ctbo, run_ffbo, run_mtbo, run_rbo, run_rmtbo
from .benchmarks import BENCHMARKS, HYPERPARAMS, LAMBDA, Benchmark, PhaseSpec, TestOperator, default_schedule
from .kernels import ScalarKernel
from .krr import PosteriorHyperparams, empty_state
from .measurement import MeasurementOperator, functional_coords, induced_operator

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
METHODS = ("vvbo", "bo", "rbo", "mtbo", "rmtbo", "ctbo", "ffbo")
METRICS = ("simple_regret", "cumulative_regret")
PLOT_COLUMNS = ("method", "benchmark", "regime", "iteration", "metric", "mean", "std")

__all__ = ["ExperimentConfig", "run_experiment", "run_single", "compute_regret", "emit_plotdata",
           "aggregate_traces", "aggregate_dir", "derive_seed", "load_config"]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# --------------------------------------------------------------------------- configuration


@dataclass(frozen=True)
class KernelConfig:
    family: str = "rbf"
    input_length_scales: tuple | None = None
    output_length_scale: float | None = None
    nu: float = 2.5


@dataclass(frozen=True)
class BetaConfig:
    """``source`` is ``table`` (per-phase default values), ``fixed`` or ``theory``."""

    source: str = "table"
    value: float | None = None
    Gamma: float = 1.0
    sigma: float | None = None
    zeta: float = 0.1


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "default"
    resolution: int | None = None
    n_starts: int = 32
    budget: int = 200
    shrink: float = 0.5


_BLOCKS = {"kernel": KernelConfig, "beta": BetaConfig, "optimizer": OptimizerConfig}


@dataclass(frozen=True)
class ExperimentConfig:
    benchmark: str
    method: str = "vvbo"
    regime: str = "full"
    iterations: int | tuple = 50
    n_phases: int | None = None
    weights: tuple | None = None
    kernel: KernelConfig = field(default_factory=KernelConfig)
    lam: float = LAMBDA
    noise_std: float | None = None
    beta: BetaConfig = field(default_factory=BetaConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    n_runs: int = 10
    seed: int = 0
    workers: int = 1
    output_dir: str | None = None
    benchmark_seed: int = 0
    benchmark_seed_policy: str = "per_run"
    integral_seed: int = 1
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}; expected {SCHEMA_VERSION}")
        if self.benchmark not in BENCHMARKS:
            raise ConfigError(f"unknown benchmark {self.benchmark!r}; choose from {list(BENCHMARKS)}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {list(METHODS)}")
        if self.regime not in ("full", "partial"):
            raise ConfigError("regime must be 'full' or 'partial'")
        if self.n_runs < 1:
            raise ConfigError("n_runs must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if not self.lam > 0.0:
            raise ConfigError("lam must be positive")
        if self.noise_std is not None and self.noise_std < 0.0:
            raise ConfigError("noise_std must be nonnegative")
        if self.beta.source not in ("table", "fixed", "theory"):
            raise ConfigError("beta.source must be 'table', 'fixed' or 'theory'")
        if self.beta.source == "fixed" and (self.beta.value is None or self.beta.value < 0.0):
            raise ConfigError("beta.source 'fixed' needs a nonnegative beta.value")
        if self.benchmark_seed_policy not in ("per_run", "fixed"):
            raise ConfigError("benchmark_seed_policy must be 'per_run' or 'fixed'")
        if self.optimizer.kind not in ("default", "grid", "multistart"):
            raise ConfigError("optimizer.kind must be 'default', 'grid' or 'multistart'")
        if self.kernel.family not in ("rbf", "matern"):
            raise ConfigError("kernel.family must be 'rbf' or 'matern'")
        if self.regime == "partial" and self.phase_count > 2:
            raise ConfigError("the partial-observation regime covers phases one and two only")
        its = np.atleast_1d(self.iterations)
        if np.any(its < 0) or its.size not in (1, self.phase_count):
            raise ConfigError("iterations must be a nonnegative int or one per phase")
        if self.weights is not None and len(self.weights) != self.phase_count:
            raise ConfigError("weights must list one entry (or null) per phase")
        expected = HYPERPARAMS[self.benchmark]
        ell = self.kernel.input_length_scales
        if ell is not None and not np.allclose(ell, expected[1]):
            log.warning("input length scale %s differs from the table default %s", ell, expected[1])

    @property
    def phase_count(self) -> int:
        if self.n_phases is not None:
            if not 1 <= self.n_phases <= 3:
                raise ConfigError("n_phases must be 1, 2 or 3")
            return self.n_phases
        return 2 if self.regime == "partial" else 3

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        if "benchmark" not in d:
            raise ConfigError("config needs a 'benchmark'")
        for name, block in _BLOCKS.items():
            if name in d:
                sub = d[name] or {}
                bad = sorted(set(sub) - {f.name for f in fields(block)})
                if bad:
                    raise ConfigError(f"unknown keys {bad} in '{name}' block")
                if name == "kernel" and sub.get("input_length_scales") is not None:
                    sub = {**sub, "input_length_scales": tuple(np.atleast_1d(sub["input_length_scales"]).tolist())}
                d[name] = block(**sub)
        if isinstance(d.get("iterations"), list):
            d["iterations"] = tuple(d["iterations"])
        if d.get("weights") is not None:
            d["weights"] = tuple(None if w is None else tuple(float(v) for v in w) for w in d["weights"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    # resolved values -------------------------------------------------------

    @property
    def resolved_noise(self) -> float:
        return HYPERPARAMS[self.benchmark][0] if self.noise_std is None else float(self.noise_std)

    def input_kernel(self, dim: int) -> ScalarKernel:
        ell = self.kernel.input_length_scales or (HYPERPARAMS[self.benchmark][1],)
        if len(ell) == 1:
            ell = tuple(ell) * dim
        return ScalarKernel(self.kernel.family, tuple(float(v) for v in ell), nu=self.kernel.nu)

    def hyper(self) -> PosteriorHyperparams:
        sigma = self.resolved_noise if self.beta.sigma is None else self.beta.sigma
        return PosteriorHyperparams(lam=self.lam, Gamma=self.beta.Gamma, sigma=sigma, zeta=self.beta.zeta)

    def schedule(self):
        sched = default_schedule(self.benchmark, self.iterations, self.regime, self.phase_count)
        if self.weights is None:
            return sched
        phases = tuple(p if w is None else replace(p, w=tuple(w)) for p, w in zip(sched.phases, self.weights))
        return replace(sched, phases=phases)

    def phase_betas(self, schedule) -> list:
        if self.beta.source == "table":
            return [p.beta for p in schedule.phases]
        if self.beta.source == "fixed":
            return [float(self.beta.value)] * len(schedule.phases)
        return [None] * len(schedule.phases)

    def make_optimizer(self, dim: int):
        o = self.optimizer
        if o.kind == "grid":
            return Grid(o.resolution if o.resolution is not None else default_optimizer(dim).resolution)
        if o.kind == "multistart":
            return MultiStart(o.n_starts, o.budget, o.shrink)
        return default_optimizer(dim)

    def operator_seed(self, run: int) -> int:
        """Seed of the random operator coefficients (GP benchmarks) used by ``run``."""
        if self.benchmark_seed_policy == "fixed" or self.benchmark not in ("GP", "GP3D"):
            return int(self.benchmark_seed)
        return derive_seed(self.benchmark_seed, run, "operator")

    def benchmark_instance(self, run: int = 0) -> Benchmark:
        seed = self.operator_seed(run)
        key = (json.dumps(self.to_dict(), sort_keys=True), seed)
        if key not in _BENCH_CACHE:
            if len(_BENCH_CACHE) > 64:
                _BENCH_CACHE.clear()
            out_ell = self.kernel.output_length_scale
            _BENCH_CACHE[key] = Benchmark(TestOperator(self.benchmark, seed), self.schedule(),
                                          self.resolved_noise, self.integral_seed, out_ell)
        return _BENCH_CACHE[key]


_BENCH_CACHE: dict = {}


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(data)


def derive_seed(master: int, run: int, stream: str) -> int:
    """Stateless 64-bit seed from ``(master, run, stream)`` via BLAKE2b."""
    msg = f"{int(master)}:{int(run)}:{stream}".encode()
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8).digest(), "little")


# --------------------------------------------------------------------------- one run


def run_single(config: ExperimentConfig, run: int) -> RegretTrace:
    """Execute run ``run`` of ``config``; randomness depends only on ``(seed, run)``."""
    bench = config.benchmark_instance(run)
    sched = bench.schedule
    dim = bench.domain.dim
    G = config.input_kernel(dim)
    hyper = config.hyper()
    opt = config.make_optimizer(dim)
    betas = config.phase_betas(sched)
    lengths = sched.lengths
    objs = bench.objectives
    rng = np.random.default_rng(derive_seed(config.seed, run, "loop"))
    method = config.method

    if method in ("bo", "rbo", "ctbo", "ffbo"):
        tasks = [ScalarTask(o.m.coords, b, n) for o, b, n in zip(objs, betas, lengths)]
        fn = {"bo": run_bo, "rbo": run_rbo, "ctbo": run_ctbo, "ffbo": run_ffbo}[method]
        return fn(bench, tasks, G, hyper, opt, rng, run)

    def projection_setup(k, w_phase):
        M = MeasurementOperator.projection(objs[k].basis)
        spec = induced_operator(M)
        m_bar, m_norm = functional_coords(M, objs[w_phase].w, spec)
        state0 = empty_state(G, spec, hyper, dim)
        return PhaseSetup(state0, LinearObjective(m_bar, m_norm, betas[w_phase]),
                          LinearObserver(spec.eigvecs.T @ M.matrix_canon))

    if method == "mtbo":
        return run_mtbo(bench, projection_setup(0, 0), lengths, opt, rng, run)
    if method == "rmtbo":
        return run_rmtbo(bench, [projection_setup(k, k) for k in range(len(lengths))], lengths, opt, rng, run)

    if config.regime == "full":
        M = MeasurementOperator.identity(bench.grid)
        spec = induced_operator(M)
        state0 = empty_state(G, spec, hyper, dim)
        observer = LinearObserver(spec.eigvecs.T)
        setups = []
        for o, b in zip(objs, betas):
            m_bar, m_norm = functional_coords(M, o.m, spec)
            setups.append(PhaseSetup(state0, LinearObjective(m_bar, m_norm, b), observer))
    else:
        first = projection_setup(0, 0)
        setups = [first] + [replace(first, objective=projection_setup(0, k).objective)
                            for k in range(1, len(lengths))]
    return run_loop(bench, VectorLearner(setups), lengths, opt, rng, run)


def _run_guarded(config: ExperimentConfig, run: int):
    try:
        return run, run_single(config, run), None
    except Exception as exc:  # noqa: BLE001 - recorded as a failure marker
        return run, None, {"run": run, "error": type(exc).__name__, "message": str(exc),
                           "traceback": traceback.format_exc()}


# --------------------------------------------------------------------------- output


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(int(v)) if isinstance(v, (int, np.integer)) else str(v)


def trace_rows(trace: RegretTrace):
    d = trace.x.shape[1]
    header = ["run", "iteration", "phase"] + [f"x{i}" for i in range(d)] + list(TRACE_COLUMNS[4:])
    rows = []
    for i in range(len(trace)):
        rows.append([trace.run, trace.iteration[i], trace.phase[i], *trace.x[i], trace.F[i],
                     trace.simple_regret[i], trace.cumulative_regret[i], trace.beta[i], trace.acquisition[i],
                     trace.posterior_size[i], trace.wall_ms[i]])
    return header, rows


def _write_csv(path: Path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


AGG_COLUMNS = ("iteration", "phase", "n_runs", "F_mean", "F_std", "simple_regret_mean", "simple_regret_std",
               "cumulative_regret_mean", "cumulative_regret_std")


def aggregate_traces(traces) -> list:
    """Per-iteration mean and population std over runs (rows keyed by ``AGG_COLUMNS``)."""
    traces = [t for t in traces if t is not None]
    if not traces or len(traces[0]) == 0:
        return []
    n = min(len(t) for t in traces)
    F = np.stack([t.F[:n] for t in traces])
    S = np.stack([t.simple_regret[:n] for t in traces])
    C = np.stack([t.cumulative_regret[:n] for t in traces])
    rows = []
    for i in range(n):
        rows.append({"iteration": int(traces[0].iteration[i]), "phase": int(traces[0].phase[i]),
                     "n_runs": len(traces), "F_mean": F[:, i].mean(), "F_std": F[:, i].std(),
                     "simple_regret_mean": S[:, i].mean(), "simple_regret_std": S[:, i].std(),
                     "cumulative_regret_mean": C[:, i].mean(), "cumulative_regret_std": C[:, i].std()})
    return rows


def emit_plotdata(aggregate, method: str, benchmark: str, regime: str, path=None) -> list:
    """Long-format rows ``(method, benchmark, regime, iteration, metric, mean, std)``; writes a CSV if ``path``."""
    rows = []
    for r in aggregate:
        for metric in METRICS:
            rows.append([method, benchmark, regime, r["iteration"], metric, r[f"{metric}_mean"], r[f"{metric}_std"]])
    if path is not None:
        _write_csv(Path(path), PLOT_COLUMNS, rows)
    return rows


def _read_run_csv(path: Path) -> RegretTrace:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [r for r in reader]
    col = {h: i for i, h in enumerate(header)}
    xcols = [i for h, i in col.items() if h.startswith("x") and h[1:].isdigit()]
    get = (lambda h, typ=float: np.array([typ(r[col[h]]) for r in data], dtype=typ))
    X = np.array([[float(r[i]) for i in xcols] for r in data]).reshape(len(data), len(xcols))
    run = int(data[0][col["run"]]) if data else int(path.stem.split("_")[-1])
    return RegretTrace(run, get("iteration", int), get("phase", int), X, get("F"), get("simple_regret"),
                       get("cumulative_regret"), get("beta"), get("acquisition"), get("posterior_size", int),
                       get("wall_ms"))


def aggregate_dir(in_dir) -> list:
    """Recompute ``aggregate.csv`` and ``plotdata.csv`` from the per-run CSVs of ``in_dir``."""
    in_dir = Path(in_dir)
    files = sorted((in_dir / "runs").glob("run_*.csv"))
    if not files:
        raise FileNotFoundError(f"no per-run CSV files under {in_dir / 'runs'}")
    traces = [_read_run_csv(f) for f in files]
    agg = aggregate_traces(traces)
    _write_csv(in_dir / "aggregate.csv", AGG_COLUMNS, [[r[c] for c in AGG_COLUMNS] for r in agg])
    meta = {}
    if (in_dir / "manifest.json").exists():
        meta = json.loads((in_dir / "manifest.json").read_text(encoding="utf-8"))["config"]
    emit_plotdata(agg, meta.get("method", ""), meta.get("benchmark", ""), meta.get("regime", ""),
                  in_dir / "plotdata.csv")
    return agg


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    traces: list
    aggregate: list
    failures: list
    out_dir: Path | None = None


def manifest(config: ExperimentConfig) -> dict:
    bench = config.benchmark_instance()
    sched = bench.schedule
    oracles = {}
    for run in range(config.n_runs):
        b = config.benchmark_instance(run)
        oracles[str(run)] = [{"phase": k + 1, "x_star": x.tolist(), "F_star": F}
                             for k, (x, F) in enumerate(b.optimum_point(k) for k in range(len(sched.phases)))]
    dim = bench.domain.dim
    opt = config.make_optimizer(dim)
    return {
        "code_version": __version__,
        "config": config.to_dict(),
        "resolved": {
            "noise_std": config.resolved_noise,
            "input_kernel": asdict(config.input_kernel(dim)),
            "output_kernel": asdict(bench.grid.kernel),
            "output_grid": bench.grid.points.tolist(),
            "output_rank": bench.grid.rank,
            "fit_reg": bench.grid.fit_reg,
            "hyper": asdict(config.hyper()),
            "phase_betas": config.phase_betas(sched),
            "schedule": [asdict(p) for p in sched.phases],
            "optimizer": {"type": type(opt).__name__, **asdict(opt)},
            "oracle_resolution": bench.oracle_resolution,
        },
        "frozen_seeds": {"benchmark_seed": config.benchmark_seed, "integral_seed": config.integral_seed,
                         "operator_seeds": {str(r): config.operator_seed(r) for r in range(config.n_runs)}},
        "run_seeds": {str(r): derive_seed(config.seed, r, "loop") for r in range(config.n_runs)},
        "seed_rule": "blake2b-64(f'{master}:{run}:{stream}'); loop rng: (seed, run, 'loop'), "
                     "per-run operator: (benchmark_seed, run, 'operator')",
        "oracles": oracles,
    }


def run_experiment(config: ExperimentConfig, out_dir=None, workers: int | None = None) -> ExperimentResult:
    """Run every seed of ``config`` and write the output directory (if any)."""
    out = out_dir if out_dir is not None else config.output_dir
    workers = config.workers if workers is None else workers
    man = manifest(config)
    if out is not None:
        out = Path(out)
        (out / "runs").mkdir(parents=True, exist_ok=True)
        for stale in (out / "runs").glob("run_*"):
            stale.unlink()
        (out / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    runs = range(config.n_runs)
    if workers > 1 and config.n_runs > 1:
        with ProcessPoolExecutor(max_workers=min(workers, config.n_runs, os.cpu_count() or 1)) as pool:
            results = list(pool.map(_run_guarded, [config] * config.n_runs, runs))
    else:
        results = [_run_guarded(config, r) for r in runs]

    traces, failures = [], []
    for run, trace, err in sorted(results, key=lambda r: r[0]):
        if err is not None:
            failures.append(err)
            log.error("run %d failed: %s", run, err["message"])
            if out is not None:
                (out / "runs" / f"run_{run:03d}.failed").write_text(json.dumps(err, indent=2) + "\n",
                                                                    encoding="utf-8")
            continue
        traces.append(trace)
        if out is not None:
            header, rows = trace_rows(trace)
            _write_csv(out / "runs" / f"run_{run:03d}.csv", header, rows)

    agg = aggregate_traces(traces)
    if out is not None:
        _write_csv(out / "aggregate.csv", AGG_COLUMNS, [[r[c] for c in AGG_COLUMNS] for r in agg])
        emit_plotdata(agg, config.method, config.benchmark, config.regime, out / "plotdata.csv")
    return ExperimentResult(config, traces, agg, failures, out)
