"""Measurement-space kernel ridge regression for separable kernels.

With ``K^M(x, s) = G(x, s) B_M`` and ``B_M = sum_j lam_j phi_j phi_j^T`` the
posterior decouples into one scalar kernel-ridge problem per eigendirection,
each with Gram matrix ``lam_j G_XX + lambda I``.  Directions sharing an
eigenvalue share a Cholesky factor, so ``B = I`` costs one factorization.

Query functions accept a single point (shape ``(d,)``) or a batch (shape
``(N, d)``) and return scalars/vectors or arrays with a leading ``N`` axis
accordingly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from .kernels import ScalarKernel
from .measurement import InducedSpectrum

log = logging.getLogger(__name__)

REFACTOR_EVERY = 32
DUPLICATE_TOL = 1e-12


@dataclass(frozen=True)
class PosteriorHyperparams:
    """Regularizer and confidence-radius parameters.

    ``beta_override`` replaces the theoretical radius when set.
    """

    lam: float = 0.01
    Gamma: float = 1.0
    sigma: float = 0.0
    zeta: float = 0.1
    beta_override: float | None = None

    def __post_init__(self):
        if not self.lam > 0.0:
            raise ValueError("regularizer lam must be positive")
        if self.Gamma < 0.0 or self.sigma < 0.0:
            raise ValueError("Gamma and sigma must be nonnegative")
        if not 0.0 < self.zeta < 1.0:
            raise ValueError("zeta must lie in (0, 1)")
        if self.beta_override is not None and self.beta_override < 0.0:
            raise ValueError("beta_override must be nonnegative")


@dataclass(frozen=True, eq=False)
class PosteriorState:
    kernel: ScalarKernel
    spectrum: InducedSpectrum
    hyper: PosteriorHyperparams
    dim: int
    X: np.ndarray
    Ybar: np.ndarray
    groups: tuple
    chols: tuple
    weights: tuple
    log_det_value: float = 0.0
    since_refactor: int = 0
    duplicates: int = 0

    @property
    def size(self) -> int:
        return self.X.shape[0]

    @property
    def rank(self) -> int:
        return self.spectrum.rank


def _eigen_groups(eigvals: np.ndarray) -> tuple:
    groups = []
    for value in np.unique(eigvals)[::-1]:
        groups.append((float(value), np.flatnonzero(eigvals == value)))
    return tuple(groups)


def empty_state(kernel: ScalarKernel, spectrum: InducedSpectrum, hyper: PosteriorHyperparams,
                dim: int) -> PosteriorState:
    """Posterior with no data: zero mean, prior covariance ``G(x, x) B_M``."""
    groups = _eigen_groups(spectrum.eigvals)
    return PosteriorState(
        kernel=kernel, spectrum=spectrum, hyper=hyper, dim=int(dim),
        X=np.zeros((0, dim)), Ybar=np.zeros((0, spectrum.rank)), groups=groups,
        chols=tuple(np.zeros((0, 0)) for _ in groups),
        weights=tuple(np.zeros((0, idx.size)) for _, idx in groups),
    )


def _points(state: PosteriorState, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    X = x.reshape(1, -1) if single else x
    if X.shape[1] != state.dim:
        raise ValueError(f"expected points of dimension {state.dim}, got {X.shape[1]}")
    return X, single


def _refactor(state: PosteriorState, X: np.ndarray, Ybar: np.ndarray):
    lam = state.hyper.lam
    G = state.kernel.matrix(X, X)
    G = np.triu(G) + np.triu(G, 1).T
    eye = np.eye(X.shape[0])
    chols, weights, log_det = [], [], 0.0
    for value, idx in state.groups:
        L = linalg.cholesky(value * G + lam * eye, lower=True)
        chols.append(L)
        weights.append(linalg.cho_solve((L, True), Ybar[:, idx]))
        log_det += idx.size * (2.0 * np.sum(np.log(np.diag(L))) - X.shape[0] * np.log(lam))
    return tuple(chols), tuple(weights), float(log_det)


def update(state: PosteriorState, x, y_coords) -> PosteriorState:
    """Append one observation (coordinates in the retained eigenbasis).

    Cholesky factors are extended by one row; every ``REFACTOR_EVERY`` updates
    they are rebuilt from scratch.  The log-determinant grows by
    ``sum_j log(1 + var_j(x) / lam)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    y = np.atleast_1d(np.asarray(y_coords, dtype=float)).ravel()
    if x.size != state.dim:
        raise ValueError(f"expected a point of dimension {state.dim}, got {x.size}")
    if y.size != state.rank:
        raise ValueError(f"expected {state.rank} observation coordinates, got {y.size}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
        raise ValueError("observation must be finite")

    duplicates = state.duplicates
    if state.size and np.min(np.sum((state.X - x) ** 2, axis=1)) <= DUPLICATE_TOL**2:
        duplicates += 1
        log.debug("duplicate query point %s", x)

    X = np.vstack([state.X, x])
    Ybar = np.vstack([state.Ybar, y])
    since = state.since_refactor + 1
    if since >= REFACTOR_EVERY:
        chols, weights, log_det = _refactor(state, X, Ybar)
        return replace(state, X=X, Ybar=Ybar, chols=chols, weights=weights,
                       log_det_value=log_det, since_refactor=0, duplicates=duplicates)

    lam = state.hyper.lam
    g_xX = state.kernel.matrix(state.X, x[None, :])[:, 0] if state.size else np.zeros(0)
    g_xx = float(state.kernel.diag(x[None, :])[0])
    t = state.size
    chols, weights = [], []
    log_det = state.log_det_value
    for (value, idx), L in zip(state.groups, state.chols):
        if t:
            ell = linalg.solve_triangular(L, value * g_xX, lower=True)
        else:
            ell = np.zeros(0)
        s2 = value * g_xx + lam - ell @ ell
        s2 = max(s2, lam)
        L_new = np.zeros((t + 1, t + 1))
        L_new[:t, :t] = L
        L_new[t, :t] = ell
        L_new[t, t] = np.sqrt(s2)
        chols.append(L_new)
        weights.append(linalg.cho_solve((L_new, True), Ybar[:, idx]))
        log_det += idx.size * np.log(s2 / lam)
    return replace(state, X=X, Ybar=Ybar, chols=tuple(chols), weights=tuple(weights),
                   log_det_value=float(log_det), since_refactor=since, duplicates=duplicates)


def posterior_mean_coords(state: PosteriorState, x) -> np.ndarray:
    """Coordinates of ``M mu_t(x)`` in the retained eigenbasis."""
    X, single = _points(state, x)
    out = np.zeros((X.shape[0], state.rank))
    if state.size:
        Gq = state.kernel.matrix(X, state.X)
        for (value, idx), W in zip(state.groups, state.weights):
            out[:, idx] = value * (Gq @ W)
    return out[0] if single else out


def objective_mean(state: PosteriorState, x, m_bar) -> np.ndarray | float:
    """``<m, M mu_t(x)>`` given the eigenbasis coordinates of ``m``."""
    m_bar = np.asarray(m_bar, dtype=float).ravel()
    if m_bar.size != state.rank:
        raise ValueError(f"expected {state.rank} functional coordinates, got {m_bar.size}")
    X, single = _points(state, x)
    if not state.size:
        out = np.zeros(X.shape[0])
    else:
        v = np.zeros(state.size)
        for (value, idx), W in zip(state.groups, state.weights):
            v += value * (W @ m_bar[idx])
        out = state.kernel.matrix(X, state.X) @ v
    return float(out[0]) if single else out


def _group_variances(state: PosteriorState, X: np.ndarray) -> np.ndarray:
    prior = state.kernel.diag(X)
    out = np.empty((X.shape[0], len(state.groups)))
    Gt = state.kernel.matrix(state.X, X) if state.size else None
    for k, ((value, _), L) in enumerate(zip(state.groups, state.chols)):
        var = value * prior
        if state.size:
            V = linalg.solve_triangular(L, Gt, lower=True)
            var = var - value * value * np.einsum("ij,ij->j", V, V)
        out[:, k] = np.maximum(var, 0.0)
    return out


def direction_variances(state: PosteriorState, x) -> np.ndarray:
    """Posterior variance along each retained eigendirection ``phi_j``."""
    X, single = _points(state, x)
    gv = _group_variances(state, X)
    out = np.empty((X.shape[0], state.rank))
    for k, (_, idx) in enumerate(state.groups):
        out[:, idx] = gv[:, [k]]
    return out[0] if single else out


def posterior_variance_opnorm(state: PosteriorState, x) -> np.ndarray | float:
    """Operator norm of the posterior covariance ``K_t^M(x, x)``."""
    X, single = _points(state, x)
    if not state.groups:
        out = np.zeros(X.shape[0])
    else:
        out = _group_variances(state, X).max(axis=1)
    return float(out[0]) if single else out


def log_det(state: PosteriorState) -> float:
    """``log det(I + lam^{-1} G_XX (x) B_M)`` (cached)."""
    return state.log_det_value


def theoretical_beta(hyper: PosteriorHyperparams, log_det_value: float) -> float:
    h = hyper
    return float(h.Gamma + h.sigma / np.sqrt(h.lam)
                 * np.sqrt(2.0 * np.log(1.0 / h.zeta) + max(log_det_value, 0.0)))


def beta(state: PosteriorState) -> float:
    if state.hyper.beta_override is not None:
        return float(state.hyper.beta_override)
    return theoretical_beta(state.hyper, state.log_det_value)


def confidence_interval(state: PosteriorState, x, m_bar, m_norm: float):
    """Lower/upper confidence bounds on ``<m, M f(x)>``."""
    center = objective_mean(state, x, m_bar)
    half = beta(state) * m_norm * np.sqrt(posterior_variance_opnorm(state, x))
    return center - half, center + half


def representer_oracle(X, Y_coords, spectrum: InducedSpectrum, lam: float, x,
                       kernel: ScalarKernel) -> np.ndarray:
    """Dense solve of the representer system, for testing.

    Builds the ``(t q) x (t q)`` block system
    ``sum_j (G(x_i, x_j) B_M + lam I_{ij}) a_j = y_i`` in measurement
    coordinates, evaluates ``sum_i G(x, x_i) B_M a_i`` and returns it in the
    eigenbasis of ``spectrum``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y_coords, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = spectrum.rank
    if X.size == 0:
        return np.zeros(n)
    t, q = X.shape[0], spectrum.dim
    if t * q > 400:
        raise ValueError("representer_oracle is meant for small instances")
    B = spectrum.matrix
    G = kernel.matrix(X, X)
    A = np.kron(G, B) + lam * np.eye(t * q)
    Y_meas = Y @ spectrum.eigvecs.T
    a = np.linalg.solve(A, Y_meas.reshape(-1)).reshape(t, q)
    g = kernel.matrix(x[None, :], X)[0]
    mean_meas = B @ (a.T @ g)
    return spectrum.eigvecs.T @ mean_meas
