"""Synthetic trajectory-valued test problems.

Each operator is a scalar function ``h(x, t)``; the output attached to an
input ``x`` is the trajectory ``t -> h(x, t)`` sampled on a 50-point grid and
fitted into the output RKHS.  Phase objectives are weighted combinations of
five functionals of that trajectory (point evaluations or integrals).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .hilbert import (
    HilbertVector,
    OutputGrid,
    combine_functionals,
    fit_from_samples,
    integral_functional,
    norm,
    point_eval_functional,
)
from .kernels import BoxDomain, ScalarKernel

log = logging.getLogger(__name__)

BENCHMARKS = ("GP", "GP3D", "Ackley", "Eggholder", "Bukin", "HolderTable", "Shubert", "Langermann")

# noise std, input length scale, output length scale; lambda = 0.01 throughout
HYPERPARAMS = {
    "GP": (1e-2, 0.1, 0.1),
    "GP3D": (1e-2, 0.1, 0.1),
    "Ackley": (1e-2, 3.0, 3.0),
    "Eggholder": (1.0, 50.0, 50.0),
    "Bukin": (1.0, 0.6, 1.0),
    "HolderTable": (1.0, 1.0, 1.0),
    "Shubert": (1e-3, 0.5, 0.5),
    "Langermann": (1e-3, 0.5, 0.5),
}
LAMBDA = 0.01
N_GRID = 50
ORACLE_RESOLUTION = {1: 10001, 2: 501, 3: 51}


# --------------------------------------------------------------------------- ground truths


def _ackley(x, t):
    u1, u2 = np.broadcast_arrays(x[:, None], t[None, :])
    r = np.sqrt(0.5 * (u1**2 + u2**2))
    c = 0.5 * (np.cos(0.2 * np.pi * u1) + np.cos(0.2 * np.pi * u2))
    return 20.0 * np.exp(-0.2 * r) + np.exp(c) - np.e


def _eggholder(x, t):
    u1, u2 = x[:, None], t[None, :]
    a = u2 / 2 + 47
    return (-a * np.sin(np.sqrt(0.5 * np.abs(u2 / 2 + u1 / 4 + 47)))
            - u1 / 2 * np.sin(np.sqrt(0.5 * np.abs(u1 / 2 - a))))


def _bukin(x, t):
    u1, u2 = x[:, None], t[None, :]
    return -100.0 * np.sqrt(np.abs(u2 - 0.01 * u1**2)) + 0.01 * np.abs(u1 + 10) + 180.0


def _holder(x, t):
    u1, u2 = x[:, None], t[None, :]
    r = np.sqrt(u1**2 + u2**2)
    return np.abs(np.sin(u1) * np.cos(u2) * np.exp(np.abs(1 - r / np.pi)))


def _shubert_factor(u):
    i = np.arange(1, 6)
    return (i * np.cos((i + 1) * u[..., None] / 2 + i)).sum(-1)


def _shubert(x, t):
    return np.outer(_shubert_factor(x), _shubert_factor(t)) / 100.0


_LANG_C = np.array([1.0, 2.0, 5.0, 2.0, 3.0])
_LANG_A = np.array([[3.0, 5.0], [5.0, 2.0], [2.0, 1.0], [1.0, 4.0], [7.0, 9.0]])


def _langermann(x, t):
    d2 = (x[:, None, None] / 2 - _LANG_A[:, 0]) ** 2 + (t[None, :, None] / 2 - _LANG_A[:, 1]) ** 2
    return (_LANG_C * np.exp(-d2 / np.pi) * np.cos(np.pi * d2)).sum(-1)


_SCALAR_OPS = {
    "Ackley": (_ackley, (-32.768, 32.768), (-32.768, 32.768)),
    "Eggholder": (_eggholder, (-512.0, 512.0), (-512.0, 512.0)),
    "Bukin": (_bukin, (-15.0, -5.0), (-3.0, 3.0)),
    "HolderTable": (_holder, (-10.0, 10.0), (-10.0, 10.0)),
    "Shubert": (_shubert, (-10.0, 10.0), (-10.0, 10.0)),
    "Langermann": (_langermann, (0.0, 10.0), (0.0, 10.0)),
}


@dataclass(frozen=True, eq=False)
class TestOperator:
    """Ground truth ``h(x, t)`` on ``x_domain x t_domain``.

    ``seed`` freezes the random coefficients of the GP operators and is
    ignored by the closed-form ones.
    """

    __test__ = False

    name: str
    seed: int = 0
    x_domain: BoxDomain = field(init=False)
    t_domain: tuple = field(init=False)
    alpha: np.ndarray | None = field(init=False, default=None, repr=False)
    _centers: np.ndarray | None = field(init=False, default=None, repr=False)

    def __post_init__(self):
        if self.name not in BENCHMARKS:
            raise ValueError(f"unknown benchmark {self.name!r}; choose from {BENCHMARKS}")
        if self.name in ("GP", "GP3D"):
            d = 1 if self.name == "GP" else 3
            centers = BoxDomain(np.zeros(d), np.ones(d)).lattice(10 if d == 1 else 5)
            alpha = np.random.default_rng(self.seed).uniform(-3.5, 3.5, size=(centers.shape[0], 10))
            object.__setattr__(self, "x_domain", BoxDomain(np.zeros(d), np.ones(d)))
            object.__setattr__(self, "t_domain", (0.0, 1.0))
            object.__setattr__(self, "alpha", alpha)
            object.__setattr__(self, "_centers", centers)
        else:
            _, xd, td = _SCALAR_OPS[self.name]
            object.__setattr__(self, "x_domain", BoxDomain([xd[0]], [xd[1]]))
            object.__setattr__(self, "t_domain", td)

    @property
    def dim(self) -> int:
        return self.x_domain.dim

    def values(self, X, T) -> np.ndarray:
        """``h`` on all pairs of input rows ``X`` and output indices ``T``: shape ``(N, M)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        T = np.atleast_1d(np.asarray(T, dtype=float))
        if self.alpha is not None:
            gx = _rbf(X, self._centers, 0.1)
            gt = _rbf(np.linspace(0.0, 1.0, 10)[:, None], T[:, None], 0.1)
            return gx @ self.alpha @ gt
        return _SCALAR_OPS[self.name][0](X[:, 0], T)


def _rbf(A, B, ell):
    d2 = ((A[:, None, :] - B[None, :, :]) ** 2).sum(-1)
    return np.exp(-0.5 * d2 / ell**2)


def eval_ground_truth(op: TestOperator, x, t) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lo, hi = op.t_domain
    span = hi - lo
    if x.size != op.dim or not op.x_domain.contains(x) or not lo - 1e-9 * span <= t <= hi + 1e-9 * span:
        raise ValueError(f"({x}, {t}) lies outside the domain of {op.name}")
    return float(op.values(x[None, :], [t])[0, 0])


def output_grid(op: TestOperator, include=(), n_grid: int = N_GRID,
                output_ell: float | None = None) -> OutputGrid:
    """Uniform 50-point output grid with the listed indices snapped in exactly."""
    ell = HYPERPARAMS[op.name][2] if output_ell is None else output_ell
    return OutputGrid.uniform(*op.t_domain, ScalarKernel("rbf", (ell,)), n_grid=n_grid, fit_reg=LAMBDA,
                              include=include)


def query_trajectory(op: TestOperator, x, noise_std: float, grid: OutputGrid, rng) -> HilbertVector:
    """Noisy samples of ``h(x, .)`` on the grid, fitted into the output space."""
    if noise_std < 0.0:
        raise ValueError("noise std must be nonnegative")
    y = op.values(np.atleast_1d(x)[None, :], grid.points)[0]
    if noise_std > 0.0:
        y = y + noise_std * rng.standard_normal(y.size)
    return fit_from_samples(grid, y)


# --------------------------------------------------------------------------- schedules


@dataclass(frozen=True)
class PhaseSpec:
    """One phase: functional descriptors, weights and confidence radius.

    Descriptors are ``("point", t)`` or ``("integral", k)``; ``k`` indexes the
    frozen random weight curves.
    """

    basis: tuple
    w: tuple
    beta: float
    iterations: int = 50


@dataclass(frozen=True)
class PhaseSchedule:
    phases: tuple
    regime: str = "full"

    def __post_init__(self):
        if self.regime not in ("full", "partial"):
            raise ValueError("regime must be 'full' or 'partial'")
        if not self.phases:
            raise ValueError("schedule needs at least one phase")
        for p in self.phases:
            if len(p.basis) != len(p.w):
                raise ValueError("each phase needs one weight per functional")
            if p.iterations < 0:
                raise ValueError("phase iterations must be nonnegative")
        if len(self.phases) >= 2:
            if self.phases[1].basis != self.phases[0].basis:
                raise ValueError("phase one to two may change only the weights")
            if self.phases[1].w == self.phases[0].w:
                raise ValueError("phase one to two must change the weights")
        if len(self.phases) >= 3 and self.phases[2].basis == self.phases[1].basis:
            raise ValueError("phase two to three must change the functional basis")
        if self.regime == "partial" and len(self.phases) > 2:
            raise ValueError("the partial-observation regime covers phases one and two only")

    @property
    def lengths(self) -> tuple:
        return tuple(p.iterations for p in self.phases)

    def point_indices(self) -> tuple:
        pts = sorted({float(v) for p in self.phases for kind, v in p.basis if kind == "point"})
        return tuple(pts)


def _points(*ts):
    return tuple(("point", float(t)) for t in ts)


_INT_A = tuple(("integral", k) for k in range(5))
_INT_B = tuple(("integral", k) for k in range(5, 10))
_AVG = (0.2,) * 5


def _e(j):
    return tuple(1.0 if i == j else 0.0 for i in range(5))


PHASE_TABLE = {
    "GP": ((_points(0, .1, .2, .3, .4), _AVG, 6.0), (_points(0, .1, .2, .3, .4), _e(1), 6.0),
           (_points(.5, .6, .7, .8, .9), _AVG, 6.0)),
    "Ackley": ((_INT_A, _AVG, 10.0), (_INT_A, (0.25, 0.0, 0.25, 0.25, 0.25), 40.0), (_INT_B, _AVG, 70.0)),
    "Bukin": ((_points(0, .5, 1, 1.5, 2), _AVG, 100.0), (_points(0, .5, 1, 1.5, 2), _e(4), 115.0),
              (_points(0, -.5, -1, -1.5, -2), _AVG, 80.0)),
    "Eggholder": ((_points(500, 400, 300, 200, 100), _e(0), 400.0),
                  (_points(500, 400, 300, 200, 100), _e(2), 250.0),
                  (_points(0, -100, -200, -300, -400), _e(4), 300.0)),
    "HolderTable": ((_INT_A, _AVG, 30.0), (_INT_A, _e(0), 30.0), (_INT_B, _AVG, 5.0)),
    "Shubert": ((_points(0, 1, 2, 3, 4), _AVG, 0.5), (_points(0, 1, 2, 3, 4), _e(3), 0.5),
                (_points(0, -1, -2, -3, -4), _e(4), 1.0)),
    "Langermann": ((_points(5, 6, 7, 8, 9), _AVG, 3.0), (_points(5, 6, 7, 8, 9), _e(0), 3.0),
                   (_points(0, 1, 2, 3, 4), _e(0), 3.0)),
}
PHASE_TABLE["GP3D"] = PHASE_TABLE["GP"]


def default_schedule(name: str, iterations=50, regime: str = "full", n_phases: int | None = None) -> PhaseSchedule:
    """The three-phase schedule of ``name`` (two phases in the partial regime)."""
    rows = PHASE_TABLE[name]
    n = (2 if regime == "partial" else 3) if n_phases is None else n_phases
    its = np.broadcast_to(np.asarray(iterations, dtype=int), (n,))
    return PhaseSchedule(tuple(PhaseSpec(b, w, beta, int(k)) for (b, w, beta), k in zip(rows[:n], its)), regime)


def integral_weight_curves(grid: OutputGrid, seed: int, count: int = 10) -> np.ndarray:
    """Frozen i.i.d. uniform ``[0, 1]`` weight curves at the grid nodes."""
    return np.random.default_rng(seed).random((count, grid.size))


@dataclass(frozen=True, eq=False)
class PhaseObjective:
    basis: tuple
    w: np.ndarray
    beta: float
    m: HilbertVector

    @property
    def m_norm(self) -> float:
        return norm(self.m)


def build_functional(grid: OutputGrid, descriptor, curves=None) -> HilbertVector:
    kind, value = descriptor
    if kind == "point":
        return point_eval_functional(grid, value)
    if kind == "integral":
        if curves is None:
            raise ValueError("integral functionals need frozen weight curves")
        return integral_functional(grid, curves[int(value)])
    raise ValueError(f"unknown functional kind {kind!r}")


def phase_objective(schedule: PhaseSchedule, phase: int, grid: OutputGrid, curves=None) -> PhaseObjective:
    """Materialize ``Xi_i`` and ``m_i = Xi_i w_i`` for zero-based ``phase``."""
    spec = schedule.phases[phase]
    basis = tuple(build_functional(grid, d, curves) for d in spec.basis)
    w = np.asarray(spec.w, dtype=float)
    return PhaseObjective(basis, w, float(spec.beta), combine_functionals(basis, w))


# --------------------------------------------------------------------------- oracle


def objective_weights(grid: OutputGrid, m: HilbertVector) -> np.ndarray:
    """``u`` with ``<m, fit(y)> = y @ u`` for every sample vector ``y``."""
    return grid.fit_coeffs(grid.gram_out @ m.coeffs)


_ORACLE_CACHE: dict = {}


def oracle_optimum(op: TestOperator, m: HilbertVector, grid: OutputGrid, resolution=None, cache_key=None):
    """Exhaustive lattice maximization of the noise-free ``F(x) = <m, fit(h(x, .))>``.

    Returns ``(x*, F*)``; ties go to the lexicographically smallest lattice
    point.  ``cache_key`` (any hashable) memoizes the result.
    """
    if cache_key is not None and cache_key in _ORACLE_CACHE:
        return _ORACLE_CACHE[cache_key]
    res = ORACLE_RESOLUTION[op.dim] if resolution is None else resolution
    L = op.x_domain.lattice(res)
    u = objective_weights(grid, m)
    best_i, best_v = -1, -np.inf
    chunk = 20000
    for s in range(0, L.shape[0], chunk):
        F = op.values(L[s:s + chunk], grid.points) @ u
        i = int(np.argmax(F))
        if F[i] > best_v:
            best_i, best_v = s + i, float(F[i])
    out = (L[best_i].copy(), best_v)
    if cache_key is not None:
        _ORACLE_CACHE[cache_key] = out
    return out


# --------------------------------------------------------------------------- problem instance


@dataclass(frozen=True, eq=False)
class Benchmark:
    """A test operator with its grid, noise level and materialized phase objectives.

    Implements the problem protocol used by the optimization loops: ``query``
    returns the noisy trajectory in canonical output coordinates.
    """

    operator: TestOperator
    schedule: PhaseSchedule
    noise_std: float | None = None
    integral_seed: int = 1
    output_ell: float | None = None
    oracle_resolution: int | None = None

    def __post_init__(self):
        if self.noise_std is None:
            object.__setattr__(self, "noise_std", HYPERPARAMS[self.operator.name][0])
        if self.noise_std < 0.0:
            raise ValueError("noise std must be nonnegative")

    @property
    def name(self) -> str:
        return self.operator.name

    @property
    def domain(self) -> BoxDomain:
        return self.operator.x_domain

    @cached_property
    def grid(self) -> OutputGrid:
        return output_grid(self.operator, self.schedule.point_indices(), output_ell=self.output_ell)

    @cached_property
    def curves(self) -> np.ndarray:
        return integral_weight_curves(self.grid, self.integral_seed)

    @cached_property
    def objectives(self) -> tuple:
        return tuple(phase_objective(self.schedule, k, self.grid, self.curves)
                     for k in range(len(self.schedule.phases)))

    @cached_property
    def _weights(self) -> tuple:
        return tuple(objective_weights(self.grid, o.m) for o in self.objectives)

    def clean_coords(self, X) -> np.ndarray:
        """Canonical coordinates of the noise-free fitted trajectories at rows of ``X``."""
        Y = self.operator.values(X, self.grid.points)
        return self.grid.fit_coeffs(Y) @ self.grid.to_canonical.T

    def query(self, x, rng) -> np.ndarray:
        return query_trajectory(self.operator, x, self.noise_std, self.grid, rng).coords

    def true_objective(self, x, phase: int):
        X = np.atleast_2d(x)
        F = self.operator.values(X, self.grid.points) @ self._weights[phase]
        return float(F[0]) if np.ndim(x) <= 1 else F

    def optimum_point(self, phase: int):
        key = (self.name, self.operator.seed, self.integral_seed, self.output_ell, self.schedule.point_indices(),
               self.schedule.phases[phase].basis, self.schedule.phases[phase].w, self.oracle_resolution)
        return oracle_optimum(self.operator, self.objectives[phase].m, self.grid, self.oracle_resolution, key)

    def optimum(self, phase: int) -> float:
        return self.optimum_point(phase)[1]
