"""Grid-based representation of the output Hilbert space.

An output element is stored as representer coefficients ``alpha`` over a fixed
grid, ``u(t) = sum_j alpha_j k(t, t_j)``, so ``<u, v> = alpha_u^T K alpha_v``.
All measurement and posterior algebra runs in *canonical coordinates*
``c = Lambda^{1/2} V^T alpha`` where ``K = V Lambda V^T`` with negligible
eigenvalues dropped; there the inner product is the Euclidean one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .kernels import ScalarKernel, gram

EPS_SPD = 1e-10


@dataclass(frozen=True, eq=False)
class OutputGrid:
    """Output grid, its Gram matrix and the canonical coordinate system.

    Parameters
    ----------
    points : array of shape (n_grid,)
        Strictly increasing trajectory-index values.
    kernel : ScalarKernel
        Output kernel ``k`` over the trajectory index.
    fit_reg : float
        Ridge used when fitting sampled trajectories.
    eps_spd : float
        Relative eigenvalue cut-off; directions with eigenvalue below
        ``eps_spd * max(eigenvalue)`` are discarded.
    """

    points: np.ndarray
    kernel: ScalarKernel
    fit_reg: float = 0.01
    eps_spd: float = EPS_SPD
    gram_out: np.ndarray = field(init=False, repr=False)
    eigvals: np.ndarray = field(init=False, repr=False)
    eigvecs: np.ndarray = field(init=False, repr=False)
    _fit_factor: tuple = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        if pts.size == 0 or np.any(np.diff(pts) <= 0.0):
            raise ValueError("grid points must be strictly increasing")
        if self.fit_reg <= 0.0:
            raise ValueError("fit_reg must be positive")
        object.__setattr__(self, "points", pts)
        K = gram(self.kernel, pts[:, None])
        lam, V = np.linalg.eigh(K)
        order = np.argsort(lam)[::-1]
        lam, V = lam[order], V[:, order]
        keep = lam > self.eps_spd * lam[0]
        object.__setattr__(self, "gram_out", K)
        object.__setattr__(self, "eigvals", lam[keep])
        object.__setattr__(self, "eigvecs", V[:, keep])
        object.__setattr__(
            self, "_fit_factor", linalg.cho_factor(K + self.fit_reg * np.eye(pts.size), lower=True)
        )

    @classmethod
    def uniform(cls, lo: float, hi: float, kernel: ScalarKernel, n_grid: int = 50,
                fit_reg: float = 0.01, include=()) -> "OutputGrid":
        """Uniform grid on ``[lo, hi]``; each value in ``include`` replaces its nearest node."""
        pts = np.linspace(lo, hi, n_grid)
        for t0 in include:
            pts[int(np.argmin(np.abs(pts - t0)))] = t0
        return cls(pts, kernel, fit_reg)

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def rank(self) -> int:
        return self.eigvals.size

    @property
    def to_canonical(self) -> np.ndarray:
        """Matrix ``Lambda^{1/2} V^T`` of shape (rank, n_grid)."""
        return np.sqrt(self.eigvals)[:, None] * self.eigvecs.T

    @property
    def from_canonical(self) -> np.ndarray:
        """Matrix ``V Lambda^{-1/2}``, right inverse of :attr:`to_canonical`."""
        return self.eigvecs / np.sqrt(self.eigvals)[None, :]

    def fit_coeffs(self, samples) -> np.ndarray:
        """Solve ``(K + fit_reg I) alpha = samples``; rows of a 2-D input are fitted independently."""
        samples = np.asarray(samples, dtype=float)
        if samples.shape[-1] != self.size:
            raise ValueError(f"expected {self.size} samples per trajectory, got {samples.shape[-1]}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        return linalg.cho_solve(self._fit_factor, samples.T).T

    def index_of(self, t0: float, tol: float = 1e-9) -> int:
        span = self.points[-1] - self.points[0] if self.size > 1 else 1.0
        j = int(np.argmin(np.abs(self.points - t0)))
        if abs(self.points[j] - t0) > tol * max(span, 1.0):
            raise ValueError(f"t0={t0} is not a grid point")
        return j

    def trapezoid_weights(self) -> np.ndarray:
        t = self.points
        w = np.zeros_like(t)
        if t.size > 1:
            h = np.diff(t)
            w[:-1] += 0.5 * h
            w[1:] += 0.5 * h
        return w

    def same_as(self, other: "OutputGrid") -> bool:
        return self is other or (
            self.kernel == other.kernel
            and self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
        )


@dataclass(frozen=True, eq=False)
class HilbertVector:
    """Element ``sum_j coeffs_j k(., t_j)`` of the gridded output space."""

    coeffs: np.ndarray
    grid: OutputGrid

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).ravel()
        if c.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} coefficients, got {c.size}")
        object.__setattr__(self, "coeffs", c)

    @property
    def coords(self) -> np.ndarray:
        """Canonical orthonormal coordinates."""
        return self.grid.to_canonical @ self.coeffs

    def values(self) -> np.ndarray:
        """The function evaluated on the grid, ``K alpha``."""
        return self.grid.gram_out @ self.coeffs

    @classmethod
    def from_coords(cls, grid: OutputGrid, coords) -> "HilbertVector":
        return cls(grid.from_canonical @ np.asarray(coords, dtype=float), grid)

    @classmethod
    def zero(cls, grid: OutputGrid) -> "HilbertVector":
        return cls(np.zeros(grid.size), grid)

    def _check(self, other):
        if not isinstance(other, HilbertVector) or not self.grid.same_as(other.grid):
            raise ValueError("vectors live on different output grids")

    def __add__(self, other):
        self._check(other)
        return HilbertVector(self.coeffs + other.coeffs, self.grid)

    def __sub__(self, other):
        self._check(other)
        return HilbertVector(self.coeffs - other.coeffs, self.grid)

    def __mul__(self, a):
        return HilbertVector(float(a) * self.coeffs, self.grid)

    __rmul__ = __mul__

    def __neg__(self):
        return HilbertVector(-self.coeffs, self.grid)


Functional = HilbertVector


def fit_from_samples(grid: OutputGrid, samples) -> HilbertVector:
    """Kernel ridge fit of one sampled trajectory (ridge ``grid.fit_reg``)."""
    samples = np.asarray(samples, dtype=float).ravel()
    return HilbertVector(grid.fit_coeffs(samples), grid)


def inner(u: HilbertVector, v: HilbertVector) -> float:
    u._check(v)
    return float(u.coeffs @ u.grid.gram_out @ v.coeffs)


def norm(u: HilbertVector) -> float:
    return float(np.sqrt(max(inner(u, u), 0.0)))


def point_eval_functional(grid: OutputGrid, t0: float) -> Functional:
    """Representer of ``u -> u(t0)``; ``t0`` must be a grid node."""
    alpha = np.zeros(grid.size)
    alpha[grid.index_of(t0)] = 1.0
    return HilbertVector(alpha, grid)


def integral_functional(grid: OutputGrid, weights) -> Functional:
    """Representer of ``u -> int g(t) u(t) dt`` with trapezoid quadrature on the grid.

    ``weights`` holds ``g(t_j)`` at the grid nodes.
    """
    g = np.asarray(weights, dtype=float).ravel()
    if g.size != grid.size:
        raise ValueError(f"expected {grid.size} weights, got {g.size}")
    if not np.all(np.isfinite(g)):
        raise ValueError("weights must be finite")
    return HilbertVector(g * grid.trapezoid_weights(), grid)


def combine_functionals(basis, w) -> Functional:
    """``sum_j w_j xi_j`` for a list of functionals sharing one grid."""
    basis = list(basis)
    w = np.asarray(w, dtype=float).ravel()
    if len(basis) != w.size:
        raise ValueError(f"{len(basis)} functionals but {w.size} weights")
    if not basis:
        raise ValueError("empty functional basis")
    grid = basis[0].grid
    for xi in basis[1:]:
        basis[0]._check(xi)
    return HilbertVector(np.stack([xi.coeffs for xi in basis], axis=1) @ w, grid)
