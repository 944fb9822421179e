"""UCB acquisition, its maximization, and the vector-valued BO loops.

The loops are written against two small protocols.  A *problem* exposes the
input domain, a noisy ``query(x, rng)`` returning the output in canonical
coordinates, the noise-free ``true_objective(x, phase)`` and the per-phase
``optimum(phase)`` used for regret.  A *learner* owns a posterior, turns raw
outputs into its own observations and scores candidate points; every method
(vvBO and the baselines) is a learner driven by :func:`run_loop`.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Protocol, Sequence

import numpy as np

from . import krr
from .kernels import BoxDomain
from .krr import PosteriorState

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------- objectives


@dataclass(frozen=True, eq=False)
class LinearObjective:
    """``<m, M f(x)>`` with ``m`` given by its retained-eigenbasis coordinates.

    ``beta`` pins the confidence radius (a per-phase table value); ``None``
    falls back to the posterior's own radius.
    """

    m_bar: np.ndarray
    m_norm: float
    beta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "m_bar", np.asarray(self.m_bar, dtype=float).ravel())
        if not self.m_norm >= 0.0:
            raise ValueError("m_norm must be nonnegative")


@dataclass(frozen=True, eq=False)
class LipschitzObjective:
    """Nonlinear objective ``F(M f(x))`` with Lipschitz constant ``L``.

    ``F`` maps a batch of measurement coordinates ``(N, q)`` to ``(N,)``;
    ``basis`` holds the retained eigenvectors (``q x n``) used to go from
    eigenbasis coordinates back to measurement coordinates.
    """

    F: Callable[[np.ndarray], np.ndarray]
    L: float
    basis: np.ndarray
    beta: float | None = None

    def __post_init__(self):
        if not self.L >= 0.0:
            raise ValueError("Lipschitz constant must be nonnegative")


@dataclass(frozen=True, eq=False)
class TimeVarying:
    """Piecewise-constant objective schedule: ``objectives[k]`` for ``lengths[k]`` iterations."""

    objectives: tuple
    lengths: tuple

    def __post_init__(self):
        if len(self.objectives) != len(self.lengths) or not self.objectives:
            raise ValueError("need one length per objective")
        if any(n < 0 for n in self.lengths):
            raise ValueError("phase lengths must be nonnegative")

    @property
    def horizon(self) -> int:
        return int(sum(self.lengths))

    def phase_at(self, t: int) -> int:
        """Zero-based phase of zero-based iteration ``t``."""
        if not 0 <= t < self.horizon:
            raise ValueError(f"iteration {t} outside the schedule horizon {self.horizon}")
        return int(np.searchsorted(np.cumsum(self.lengths), t, side="right"))

    def at(self, t: int):
        return self.objectives[self.phase_at(t)]


def _resolve(obj, t: int):
    return obj.at(t) if isinstance(obj, TimeVarying) else obj


def ucb_score(state: PosteriorState, x, obj, t: int = 0):
    """Optimistic score ``mean + beta * width`` at ``x`` (single point or batch)."""
    obj = _resolve(obj, t)
    b = krr.beta(state) if obj.beta is None else float(obj.beta)
    sd = np.sqrt(np.maximum(krr.posterior_variance_opnorm(state, x), 0.0))
    if isinstance(obj, LipschitzObjective):
        coords = krr.posterior_mean_coords(state, x)
        meas = coords @ np.asarray(obj.basis).T
        single = meas.ndim == 1
        mean = np.asarray(obj.F(np.atleast_2d(meas)), dtype=float)
        mean = float(mean[0]) if single else mean
        return mean + b * obj.L * sd
    return krr.objective_mean(state, x, obj.m_bar) + b * obj.m_norm * sd


# --------------------------------------------------------------------------- optimizers


@dataclass(frozen=True)
class Grid:
    """Exhaustive search over a regular lattice (``resolution`` points per axis)."""

    resolution: int | tuple = 1001

    def __post_init__(self):
        res = np.atleast_1d(self.resolution)
        if np.any(res < 2):
            raise ValueError("grid resolution must be at least 2")

    def candidates(self, domain: BoxDomain) -> np.ndarray:
        return _lattice(tuple(domain.lower), tuple(domain.upper), self.resolution)

    def random_point(self, domain: BoxDomain, rng) -> np.ndarray:
        cand = self.candidates(domain)
        return cand[int(rng.integers(cand.shape[0]))].copy()


@lru_cache(maxsize=32)
def _lattice(lower, upper, resolution):
    L = BoxDomain(np.array(lower), np.array(upper)).lattice(resolution)
    L.setflags(write=False)
    return L


@dataclass(frozen=True)
class MultiStart:
    """Derivative-free coordinate pattern search from random starts.

    Each start evaluates ``x +- step * e_i`` for every coordinate, moves to the
    best improvement, and shrinks the step by ``shrink`` when nothing improves.
    ``budget`` counts scorer evaluations per start.
    """

    n_starts: int = 32
    budget: int = 200
    shrink: float = 0.5
    init_step: float = 0.25

    def __post_init__(self):
        if self.n_starts < 1 or self.budget < 1:
            raise ValueError("n_starts and budget must be positive")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink must lie in (0, 1)")

    def random_point(self, domain: BoxDomain, rng) -> np.ndarray:
        return domain.sample(rng, 1)[0]


def default_optimizer(dim: int):
    if dim == 1:
        return Grid(1001)
    if dim == 2:
        return Grid(101)
    return MultiStart(32, 200)


def maximize_acquisition(opt, domain: BoxDomain, scorer, rng=None):
    """Return ``(x, score)`` maximizing a batched ``scorer`` over ``domain``.

    Grid ties resolve to the lexicographically smallest lattice point.
    """
    if domain is None or domain.dim == 0:
        raise ValueError("empty domain")
    if isinstance(opt, Grid):
        cand = opt.candidates(domain)
        vals = np.asarray(scorer(cand), dtype=float)
        i = int(np.argmax(vals))
        return cand[i].copy(), float(vals[i])
    if isinstance(opt, MultiStart):
        if rng is None:
            raise ValueError("MultiStart needs an rng")
        return _pattern_search(opt, domain, scorer, rng)
    raise TypeError(f"unknown optimizer {opt!r}")


def _pattern_search(opt: MultiStart, domain: BoxDomain, scorer, rng):
    d = domain.dim
    width = domain.upper - domain.lower
    X = domain.sample(rng, opt.n_starts)
    vals = np.asarray(scorer(X), dtype=float)
    steps = np.full(opt.n_starts, opt.init_step)
    moves = np.concatenate([np.eye(d), -np.eye(d)])
    used = 1
    while used + 2 * d <= opt.budget:
        cand = X[:, None, :] + steps[:, None, None] * moves[None, :, :] * width
        cand = domain.clip(cand.reshape(-1, d)).reshape(opt.n_starts, 2 * d, d)
        cv = np.asarray(scorer(cand.reshape(-1, d)), dtype=float).reshape(opt.n_starts, 2 * d)
        used += 2 * d
        j = np.argmax(cv, axis=1)
        best = cv[np.arange(opt.n_starts), j]
        better = best > vals
        X[better] = cand[better, j[better]]
        vals[better] = best[better]
        steps[~better] *= opt.shrink
    i = int(np.argmax(vals))
    return X[i].copy(), float(vals[i])


# --------------------------------------------------------------------------- traces


TRACE_COLUMNS = ("run", "iteration", "phase", "x", "F", "simple_regret", "cumulative_regret",
                 "beta", "acquisition", "posterior_size", "wall_ms")


@dataclass(eq=False)
class RegretTrace:
    """Per-iteration record of one optimization run (phases are 1-based)."""

    run: int
    iteration: np.ndarray
    phase: np.ndarray
    x: np.ndarray
    F: np.ndarray
    simple_regret: np.ndarray
    cumulative_regret: np.ndarray
    beta: np.ndarray
    acquisition: np.ndarray
    posterior_size: np.ndarray
    wall_ms: np.ndarray
    final_state: object = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.iteration.size

    @classmethod
    def empty(cls, run: int, dim: int) -> "RegretTrace":
        z = np.zeros(0)
        zi = np.zeros(0, dtype=int)
        return cls(run, zi, zi.copy(), np.zeros((0, dim)), z, z.copy(), z.copy(), z.copy(), z.copy(),
                   zi.copy(), z.copy())

    def same_as(self, other: "RegretTrace") -> bool:
        """Bitwise equality of every column except wall-clock time."""
        names = [c for c in TRACE_COLUMNS if c not in ("run", "wall_ms")]
        return all(np.array_equal(getattr(self, c), getattr(other, c)) for c in names)

    def select(self, mask) -> "RegretTrace":
        mask = np.asarray(mask)
        cols = {c: getattr(self, c)[mask] for c in TRACE_COLUMNS if c != "run"}
        return RegretTrace(self.run, **cols)


def compute_regret(F, phases, optima):
    """Simple and cumulative regret from raw objective values.

    ``optima`` maps each phase label to ``F*``.  Simple regret is the per-phase
    best-so-far gap, restarting at each phase boundary; cumulative regret sums
    instantaneous gaps over the whole run.  Gaps are floored at zero: a query
    can only beat the reference when the acquisition search visits a point the
    oracle lattice does not contain.
    """
    F = np.asarray(F, dtype=float)
    phases = np.asarray(phases)
    missing = sorted({int(p) for p in np.unique(phases)} - set(int(k) for k in optima))
    if missing:
        raise ValueError(f"no oracle value for phase(s) {missing}")
    ref = np.array([optima[int(p)] for p in phases], dtype=float).reshape(F.shape)
    gap = ref - F
    if np.any(gap < 0.0):
        log.info("%d queries exceeded the oracle reference; gaps floored at 0", int(np.sum(gap < 0)))
    gap = np.maximum(gap, 0.0)
    simple = np.empty_like(gap)
    for p in np.unique(phases):
        idx = np.flatnonzero(phases == p)
        simple[idx] = np.minimum.accumulate(gap[idx])
    return simple, np.cumsum(gap)


# --------------------------------------------------------------------------- loop


class Problem(Protocol):
    domain: BoxDomain

    def query(self, x, rng) -> np.ndarray: ...

    def true_objective(self, x, phase: int) -> float: ...

    def optimum(self, phase: int) -> float: ...


class Learner(Protocol):
    @property
    def size(self) -> int: ...

    def start_phase(self, k: int) -> None: ...

    def beta(self) -> float: ...

    def score(self, X: np.ndarray) -> np.ndarray: ...

    def observe(self, x: np.ndarray, output: np.ndarray) -> None: ...


def run_loop(problem, learner, lengths: Sequence[int], opt, rng, run: int = 0) -> RegretTrace:
    """Drive ``learner`` through consecutive phases of ``lengths`` iterations.

    An empty posterior scores every stationary-kernel candidate alike, so the
    first query after a (re)start is a random candidate drawn from ``rng``.
    """
    domain = problem.domain
    rows = []
    it = 0
    for k, n in enumerate(lengths):
        learner.start_phase(k)
        for _ in range(int(n)):
            tic = time.perf_counter()
            b = learner.beta()
            if learner.size == 0:
                x = opt.random_point(domain, rng)
                acq = float(learner.score(x[None, :])[0])
            else:
                x, acq = maximize_acquisition(opt, domain, learner.score, rng)
            learner.observe(x, problem.query(x, rng))
            F = float(problem.true_objective(x, k))
            it += 1
            rows.append((it, k + 1, x, F, b, acq, learner.size, 1e3 * (time.perf_counter() - tic)))
    if not rows:
        trace = RegretTrace.empty(run, domain.dim)
        trace.final_state = getattr(learner, "state", None)
        return trace
    iteration, phase, xs, F, betas, acqs, sizes, wall = zip(*rows)
    phase = np.array(phase, dtype=int)
    optima = {int(p): float(problem.optimum(int(p) - 1)) for p in np.unique(phase)}
    simple, cumulative = compute_regret(F, phase, optima)
    return RegretTrace(
        run=run, iteration=np.array(iteration, dtype=int), phase=phase, x=np.array(xs),
        F=np.array(F), simple_regret=simple, cumulative_regret=cumulative, beta=np.array(betas),
        acquisition=np.array(acqs), posterior_size=np.array(sizes, dtype=int), wall_ms=np.array(wall),
        final_state=getattr(learner, "state", None),
    )


@dataclass(frozen=True, eq=False)
class PhaseSetup:
    """What a vector-valued learner uses during one phase.

    ``to_obs`` maps a raw output (canonical coordinates) to observation
    coordinates in the retained eigenbasis of ``state0.spectrum``.  With
    ``reset`` the posterior restarts from ``state0`` when the phase begins.
    """

    state0: PosteriorState
    objective: object
    to_obs: Callable[[np.ndarray], np.ndarray]
    reset: bool = False


class VectorLearner:
    """Vector-valued kernel-ridge learner; the engine behind vvBO, MTBO and rMTBO."""

    def __init__(self, setups: Sequence[PhaseSetup]):
        self.setups = tuple(setups)
        self.state = self.setups[0].state0
        self._k = 0

    @property
    def size(self) -> int:
        return self.state.size

    def start_phase(self, k: int) -> None:
        self._k = k
        setup = self.setups[k]
        if k == 0 or setup.reset:
            self.state = setup.state0
        elif setup.state0.spectrum is not self.state.spectrum:
            raise ValueError("a phase without reset must keep the measurement operator")

    def beta(self) -> float:
        obj = self.setups[self._k].objective
        return krr.beta(self.state) if obj.beta is None else float(obj.beta)

    def score(self, X):
        return ucb_score(self.state, X, self.setups[self._k].objective)

    def observe(self, x, output):
        self.state = krr.update(self.state, x, self.setups[self._k].to_obs(output))


@dataclass(frozen=True, eq=False)
class LinearObserver:
    """Linear map from a raw output (canonical coordinates) to observation coordinates."""

    matrix: np.ndarray

    def __call__(self, c) -> np.ndarray:
        return self.matrix @ np.asarray(c, dtype=float)


def _identity(v):
    return np.asarray(v, dtype=float)


def run_vvbo(problem, T: int, obj, state_0: PosteriorState, opt, rng, *, to_obs=None,
             run: int = 0) -> RegretTrace:
    """Single-objective vvBO for ``T`` iterations."""
    setup = PhaseSetup(state_0, obj, to_obs or _identity)
    return run_loop(problem, VectorLearner([setup]), [T], opt, rng, run)


def run_tv_vvbo(problem, T: int, schedule: TimeVarying, state_0: PosteriorState, opt, rng, *,
                to_obs=None, run: int = 0) -> RegretTrace:
    """vvBO with a time-varying objective; the posterior carries over phase switches."""
    if T > schedule.horizon:
        raise ValueError(f"schedule covers {schedule.horizon} iterations, asked for {T}")
    lengths, left = [], T
    for n in schedule.lengths:
        lengths.append(min(n, left))
        left -= lengths[-1]
    setups = [PhaseSetup(state_0, o, to_obs or _identity) for o in schedule.objectives[:len(lengths)]]
    return run_loop(problem, VectorLearner(setups), lengths, opt, rng, run)
