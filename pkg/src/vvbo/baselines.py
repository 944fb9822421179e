"""Comparison methods: scalar GP-UCB (BO, rBO), multi-task BO (MTBO, rMTBO) and
contextual BO over an augmented kernel (CTBO, FFBO).

MTBO/rMTBO reuse :class:`~vvbo.acquisition.VectorLearner` with a projection
measurement; the scalar methods run :class:`ScalarLearner` on top of
:class:`ScalarGPState`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import linalg

from .acquisition import PhaseSetup, RegretTrace, VectorLearner, run_loop
from .kernels import ScalarKernel
from .krr import PosteriorHyperparams, theoretical_beta


@dataclass(frozen=True, eq=False)
class AugmentedKernel:
    """``K((x1, c1), (x2, c2)) = G(x1, x2) * <c1, B c2>`` on rows ``[x, c]``.

    ``c`` are canonical output coordinates of the context functional, ``B`` is
    the output operator in the same coordinates (identity when ``None``).
    """

    base: ScalarKernel
    x_dim: int
    B: np.ndarray | None = None

    def _split(self, A):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        return A[:, :self.x_dim], A[:, self.x_dim:]

    def matrix(self, A, Bm) -> np.ndarray:
        xa, ca = self._split(A)
        xb, cb = self._split(Bm)
        ctx = ca @ cb.T if self.B is None else ca @ self.B @ cb.T
        return self.base.matrix(xa, xb) * ctx

    def diag(self, A) -> np.ndarray:
        xa, ca = self._split(A)
        ctx = np.einsum("ij,ij->i", ca, ca) if self.B is None else np.einsum("ij,jk,ik->i", ca, self.B, ca)
        return self.base.diag(xa) * ctx


@dataclass(frozen=True, eq=False)
class ScalarGPState:
    """Scalar kernel ridge posterior with an incrementally grown Cholesky factor of ``K + lam I``."""

    kernel: object
    lam: float
    X: np.ndarray
    y: np.ndarray
    L: np.ndarray
    weights: np.ndarray
    log_det_value: float = 0.0

    @classmethod
    def empty(cls, kernel, lam: float, dim: int) -> "ScalarGPState":
        if not lam > 0.0:
            raise ValueError("lam must be positive")
        return cls(kernel, float(lam), np.zeros((0, dim)), np.zeros(0), np.zeros((0, 0)), np.zeros(0))

    @property
    def size(self) -> int:
        return self.y.size


def scalar_gp_update(state: ScalarGPState, x, y: float) -> ScalarGPState:
    x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    if x.size != state.X.shape[1]:
        raise ValueError(f"expected a point of dimension {state.X.shape[1]}, got {x.size}")
    if not (np.isfinite(y) and np.all(np.isfinite(x))):
        raise ValueError("observation must be finite")
    t = state.size
    k_xx = float(state.kernel.diag(x[None, :])[0])
    if t:
        k = state.kernel.matrix(state.X, x[None, :])[:, 0]
        ell = linalg.solve_triangular(state.L, k, lower=True)
    else:
        ell = np.zeros(0)
    s2 = max(k_xx + state.lam - ell @ ell, state.lam)
    L = np.zeros((t + 1, t + 1))
    L[:t, :t] = state.L
    L[t, :t] = ell
    L[t, t] = np.sqrt(s2)
    yv = np.append(state.y, float(y))
    return replace(state, X=np.vstack([state.X, x]), y=yv, L=L,
                   weights=linalg.cho_solve((L, True), yv),
                   log_det_value=state.log_det_value + float(np.log(s2 / state.lam)))


def scalar_gp_predict(state: ScalarGPState, x):
    """Posterior mean and variance at a point or a batch of points."""
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    X = x.reshape(1, -1) if single else x
    prior = state.kernel.diag(X)
    if state.size == 0:
        mean, var = np.zeros(X.shape[0]), prior
    else:
        Kq = state.kernel.matrix(X, state.X)
        mean = Kq @ state.weights
        V = linalg.solve_triangular(state.L, Kq.T, lower=True)
        var = np.maximum(prior - np.einsum("ij,ij->j", V, V), 0.0)
    return (float(mean[0]), float(var[0])) if single else (mean, var)


@dataclass(frozen=True, eq=False)
class ScalarPhase:
    """Per-phase setup of a scalar learner.

    The learner observes ``<obs_functional, output>`` and, when ``context`` is
    set, augments each input with it.  ``width_scale`` multiplies the posterior
    standard deviation (``||m||`` for BO on ``F = <m, f>``, 1 for CTBO whose
    augmented kernel already carries ``||m||^2``).
    """

    obs_functional: np.ndarray
    beta: float | None
    width_scale: float = 1.0
    context: np.ndarray | None = None
    reset: bool = False


class ScalarLearner:
    def __init__(self, kernel, hyper: PosteriorHyperparams, x_dim: int, phases: Sequence[ScalarPhase]):
        self.phases = tuple(phases)
        self.hyper = hyper
        self.x_dim = x_dim
        ctx_dim = 0 if self.phases[0].context is None else self.phases[0].context.size
        self._empty = ScalarGPState.empty(kernel, hyper.lam, x_dim + ctx_dim)
        self.state = self._empty
        self._k = 0

    @property
    def size(self) -> int:
        return self.state.size

    def start_phase(self, k: int) -> None:
        self._k = k
        if k == 0 or self.phases[k].reset:
            self.state = self._empty

    def _rows(self, X):
        ctx = self.phases[self._k].context
        X = np.atleast_2d(X)
        if ctx is None:
            return X
        return np.hstack([X, np.broadcast_to(ctx, (X.shape[0], ctx.size))])

    def beta(self) -> float:
        b = self.phases[self._k].beta
        return theoretical_beta(self.hyper, self.state.log_det_value) if b is None else float(b)

    def score(self, X):
        mean, var = scalar_gp_predict(self.state, self._rows(X))
        return mean + self.beta() * self.phases[self._k].width_scale * np.sqrt(var)

    def observe(self, x, output):
        y = float(self.phases[self._k].obs_functional @ np.asarray(output, dtype=float))
        self.state = scalar_gp_update(self.state, self._rows(x)[0], y)


@dataclass(frozen=True, eq=False)
class ScalarTask:
    """Objective of one phase for the scalar baselines, in canonical output coordinates."""

    m_coords: np.ndarray
    beta: float | None
    iterations: int


def _scalar_run(problem, tasks, kernel, hyper, opt, rng, run, *, reset, context=None, fixed_context=False):
    x_dim = problem.domain.dim
    phases = []
    for k, task in enumerate(tasks):
        m = np.asarray(task.m_coords, dtype=float)
        if context:
            ctx = np.asarray(tasks[0].m_coords if fixed_context else m, dtype=float)
            phases.append(ScalarPhase(m, task.beta, 1.0, ctx, reset and k > 0))
        else:
            phases.append(ScalarPhase(m, task.beta, float(np.linalg.norm(m)), None, reset and k > 0))
    if context:
        kernel = AugmentedKernel(kernel, x_dim)
    learner = ScalarLearner(kernel, hyper, x_dim, phases)
    return run_loop(problem, learner, [t.iterations for t in tasks], opt, rng, run)


def run_bo(problem, tasks, kernel, hyper, opt, rng, run: int = 0) -> RegretTrace:
    """GP-UCB on the scalar phase objective; the dataset persists across phases."""
    return _scalar_run(problem, tasks, kernel, hyper, opt, rng, run, reset=False)


def run_rbo(problem, tasks, kernel, hyper, opt, rng, run: int = 0) -> RegretTrace:
    """GP-UCB restarted from scratch at every phase boundary."""
    return _scalar_run(problem, tasks, kernel, hyper, opt, rng, run, reset=True)


def run_ctbo(problem, tasks, kernel, hyper, opt, rng, run: int = 0) -> RegretTrace:
    """Contextual GP-UCB on ``(x, m_i)`` with the current phase functional as context."""
    return _scalar_run(problem, tasks, kernel, hyper, opt, rng, run, reset=False, context=True)


def run_ffbo(problem, tasks, kernel, hyper, opt, rng, run: int = 0) -> RegretTrace:
    """Contextual GP-UCB with the context frozen at the phase-one functional."""
    return _scalar_run(problem, tasks, kernel, hyper, opt, rng, run, reset=False, context=True,
                       fixed_context=True)


def run_mtbo(problem, phase_one: PhaseSetup, lengths: Sequence[int], opt, rng, run: int = 0) -> RegretTrace:
    """Multi-task BO: measurement ``Xi_1^*`` and objective ``w_1`` kept for every phase."""
    learner = VectorLearner([phase_one] * len(lengths))
    return run_loop(problem, learner, lengths, opt, rng, run)


def run_rmtbo(problem, setups: Sequence[PhaseSetup], lengths: Sequence[int], opt, rng,
              run: int = 0) -> RegretTrace:
    """Multi-task BO re-initialized with ``(Xi_i, w_i)`` at each phase."""
    learner = VectorLearner([replace(s, reset=True) for s in setups])
    return run_loop(problem, learner, lengths, opt, rng, run)
