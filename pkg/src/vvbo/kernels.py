"""Scalar positive-definite kernels on boxes in R^d.

These are the ``G`` factor of the separable operator-valued kernel
``K(x, s) = G(x, s) B`` and also the output kernel ``k`` of the trajectory
grid.  Every function accepts single points (1-D arrays) as well as stacks of
points (2-D arrays, one row per point).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FAMILIES = ("rbf", "matern", "linear")
_SQRT3 = np.sqrt(3.0)
_SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class ScalarKernel:
    """Stationary RBF / Matern kernel or the linear kernel.

    Parameters
    ----------
    family : {"rbf", "matern", "linear"}
    length_scales : sequence of positive floats
        One entry per input dimension, or a single entry broadcast to all
        dimensions.  Ignored by the linear kernel.
    variance : float
        Multiplicative scale; ``G(x, x) = variance`` for RBF/Matern.
    nu : float
        Matern smoothness, 1.5 or 2.5.
    """

    family: str = "rbf"
    length_scales: tuple = (1.0,)
    variance: float = 1.0
    nu: float = 2.5

    def __post_init__(self):
        family = self.family.lower()
        if family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        object.__setattr__(self, "family", family)
        ls = tuple(float(v) for v in np.atleast_1d(self.length_scales))
        if family != "linear" and (len(ls) == 0 or min(ls) <= 0.0):
            raise ValueError("length scales must be strictly positive")
        object.__setattr__(self, "length_scales", ls)
        if self.variance <= 0.0:
            raise ValueError("variance scale must be positive")
        if family == "matern" and self.nu not in (1.5, 2.5):
            raise ValueError("Matern smoothness must be 1.5 or 2.5")

    def scales(self, d: int) -> np.ndarray:
        if len(self.length_scales) == 1:
            return np.full(d, self.length_scales[0])
        if len(self.length_scales) != d:
            raise ValueError(
                f"kernel has {len(self.length_scales)} length scales but inputs have dimension {d}"
            )
        return np.asarray(self.length_scales)

    def matrix(self, A, B) -> np.ndarray:
        """Cross-covariance ``G(A_i, B_j)`` for two stacks of points."""
        A = _as_rows(A)
        B = _as_rows(B)
        if A.shape[1] != B.shape[1]:
            raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
        if self.family == "linear":
            return self.variance * (A @ B.T)
        r2 = _sq_dist(A, B, self.scales(A.shape[1]))
        if self.family == "rbf":
            return self.variance * np.exp(-0.5 * r2)
        r = np.sqrt(r2)
        if self.nu == 1.5:
            return self.variance * (1.0 + _SQRT3 * r) * np.exp(-_SQRT3 * r)
        return self.variance * (1.0 + _SQRT5 * r + 5.0 * r2 / 3.0) * np.exp(-_SQRT5 * r)

    def diag(self, A) -> np.ndarray:
        A = _as_rows(A)
        if self.family == "linear":
            return self.variance * np.einsum("ij,ij->i", A, A)
        self.scales(A.shape[1])
        return np.full(A.shape[0], self.variance)


@dataclass(frozen=True)
class BoxDomain:
    lower: np.ndarray = field(default_factory=lambda: np.zeros(1))
    upper: np.ndarray = field(default_factory=lambda: np.ones(1))

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper bounds must be vectors of equal length")
        if np.any(lo > hi):
            raise ValueError("empty domain: a lower bound exceeds its upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = _as_rows(x)
        span = self.upper - self.lower
        return bool(np.all(x >= self.lower - tol * span) and np.all(x <= self.upper + tol * span))

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def lattice(self, resolution) -> np.ndarray:
        """Regular lattice in lexicographic order (first coordinate slowest)."""
        res = np.broadcast_to(np.asarray(resolution, dtype=int), (self.dim,))
        axes = [np.linspace(lo, hi, int(n)) for lo, hi, n in zip(self.lower, self.upper, res)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        size = (self.dim,) if n is None else (n, self.dim)
        return self.lower + (self.upper - self.lower) * rng.random(size)


def _as_rows(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        return X.reshape(1, 1)
    if X.ndim == 1:
        return X.reshape(1, -1)
    return X


def _sq_dist(A: np.ndarray, B: np.ndarray, ell=None) -> np.ndarray:
    # per-coordinate accumulation keeps d(x, x) exactly zero
    ell = np.ones(A.shape[1]) if ell is None else ell
    d2 = np.zeros((A.shape[0], B.shape[0]))
    for k in range(A.shape[1]):
        d2 += ((A[:, k, None] - B[None, :, k]) / ell[k]) ** 2
    return d2


def kernel_eval(k: ScalarKernel, x, s) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if x.shape != s.shape or x.ndim != 1:
        raise ValueError(f"dimension mismatch: {x.shape} vs {s.shape}")
    if k.family == "linear":
        return float(k.variance * x @ s)
    ell = k.scales(x.size)
    r2 = float(np.sum(((x - s) / ell) ** 2))
    if k.family == "rbf":
        return float(k.variance * np.exp(-0.5 * r2))
    r = np.sqrt(r2)
    if k.nu == 1.5:
        return float(k.variance * (1.0 + _SQRT3 * r) * np.exp(-_SQRT3 * r))
    return float(k.variance * (1.0 + _SQRT5 * r + 5.0 * r2 / 3.0) * np.exp(-_SQRT5 * r))


def gram(k, X) -> np.ndarray:
    """Symmetric Gram matrix of ``k`` on the rows of ``X``.

    The upper and lower triangles are made bitwise equal.  Works for any
    kernel object exposing ``matrix(A, B)``.
    """
    X = _as_rows(X)
    if X.shape[0] == 0:
        return np.zeros((0, 0))
    K = k.matrix(X, X)
    return np.triu(K) + np.triu(K, 1).T


def cross_gram(k, x, X) -> np.ndarray:
    """Row vector ``G(x, X_i)``; empty when ``X`` has no rows."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return np.zeros(0)
    X = _as_rows(X)
    if X.shape[1] != x.size:
        raise ValueError(f"dimension mismatch: point has {x.size} coordinates, set has {X.shape[1]}")
    return k.matrix(x[None, :], X)[0]


def has_duplicates(X, tol: float = 1e-12) -> bool:
    X = _as_rows(X)
    if X.shape[0] < 2:
        return False
    d2 = _sq_dist(X, X)
    np.fill_diagonal(d2, np.inf)
    return bool(d2.min() <= tol * tol)
