"""Linear measurement operators and the induced operator ``B_M = M B M^*``.

A :class:`MeasurementOperator` is stored as the matrix ``P`` taking canonical
output coordinates to measurement coordinates.  For the identity ``P = I``;
for a projection onto functionals ``xi_1..xi_q`` row ``i`` of ``P`` is the
canonical coordinate vector of ``xi_i`` so that ``(P c_u)_i = <xi_i, u>``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .hilbert import HilbertVector, OutputGrid

log = logging.getLogger(__name__)

DEFAULT_ENERGY = 1.0 - 1e-10


@dataclass(frozen=True, eq=False)
class MeasurementOperator:
    kind: str
    grid: OutputGrid
    matrix_canon: np.ndarray
    rows: tuple = ()

    @classmethod
    def identity(cls, grid: OutputGrid) -> "MeasurementOperator":
        return cls("identity", grid, np.eye(grid.rank))

    @classmethod
    def projection(cls, functionals) -> "MeasurementOperator":
        functionals = tuple(functionals)
        if not functionals:
            raise ValueError("projection needs at least one functional")
        grid = functionals[0].grid
        for xi in functionals[1:]:
            functionals[0]._check(xi)
        P = np.stack([xi.coords for xi in functionals])
        if np.linalg.matrix_rank(P) < P.shape[0]:
            warnings.warn("measurement functionals are linearly dependent; "
                          "the induced spectrum will be truncated", RuntimeWarning, stacklevel=2)
        kind = "scalar" if len(functionals) == 1 else "projection"
        return cls(kind, grid, P, functionals)

    @classmethod
    def scalar(cls, xi: HilbertVector) -> "MeasurementOperator":
        return cls.projection([xi])

    @property
    def dim(self) -> int:
        """Dimension of the measurement coordinates."""
        return self.matrix_canon.shape[0]

    @property
    def opnorm(self) -> float:
        return float(np.linalg.norm(self.matrix_canon, 2))


@dataclass(frozen=True, eq=False)
class InducedSpectrum:
    """Truncated eigendecomposition of ``B_M``.

    ``eigvecs`` has one column per retained direction, expressed in
    measurement coordinates.
    """

    eigvals: np.ndarray
    eigvecs: np.ndarray
    trace: float
    policy: tuple = ("energy", DEFAULT_ENERGY)

    @property
    def rank(self) -> int:
        return self.eigvals.size

    @property
    def dim(self) -> int:
        return self.eigvecs.shape[0]

    @classmethod
    def from_matrix(cls, B_M, policy=("energy", DEFAULT_ENERGY)) -> "InducedSpectrum":
        B_M = np.asarray(B_M, dtype=float)
        B_M = 0.5 * (B_M + B_M.T)
        lam, V = np.linalg.eigh(B_M)
        order = np.argsort(lam)[::-1]
        lam, V = lam[order], V[:, order]
        trace = float(np.trace(B_M))
        positive = lam > 1e-12 * max(lam[0], 0.0) if lam.size else np.zeros(0, bool)
        n = int(np.count_nonzero(positive))
        kind, value = policy
        if kind == "rank":
            n = min(n, int(value))
        elif kind == "energy":
            if trace > 0.0:
                cum = np.cumsum(lam[:n])
                n = min(n, int(np.searchsorted(cum, value * trace)) + 1)
        else:
            raise ValueError(f"unknown truncation policy {kind!r}")
        return cls(lam[:n].copy(), V[:, :n].copy(), trace, (kind, value))

    @property
    def matrix(self) -> np.ndarray:
        """The rank-truncated ``B_{M,n}`` in measurement coordinates."""
        return (self.eigvecs * self.eigvals) @ self.eigvecs.T


def induced_operator(M: MeasurementOperator, B=None, policy=("energy", DEFAULT_ENERGY)) -> InducedSpectrum:
    """Spectrum of ``B_M = P B P^T``; ``B`` defaults to the identity."""
    r = M.matrix_canon.shape[1]
    if B is None:
        B = np.eye(r)
    B = np.asarray(B, dtype=float)
    if B.shape != (r, r):
        raise ValueError(f"B must be {r}x{r} in canonical output coordinates, got {B.shape}")
    if not np.allclose(B, B.T, atol=1e-12 * max(1.0, np.abs(B).max())):
        raise ValueError("B must be symmetric")
    scale = np.linalg.norm(B, 2)
    if np.linalg.eigvalsh(B).min() < -1e-8 * scale:
        raise ValueError("B must be positive semidefinite")
    P = M.matrix_canon
    return InducedSpectrum.from_matrix(P @ B @ P.T, policy)


def measure(M: MeasurementOperator, u) -> np.ndarray:
    """Measurement coordinates of ``M u``.

    ``u`` is a :class:`HilbertVector` or an array of canonical coordinates
    (rows for a batch).
    """
    if isinstance(u, HilbertVector):
        if not M.grid.same_as(u.grid):
            raise ValueError("vector lives on a different output grid")
        c = u.coords
    else:
        c = np.asarray(u, dtype=float)
    return c @ M.matrix_canon.T


def pullback_functional(M: MeasurementOperator, m: HilbertVector) -> np.ndarray:
    """Measurement-space ``w`` with ``M^* w = m`` (least squares).

    Warns when ``m`` is not in the range of ``M^*``.
    """
    if M.kind == "identity":
        return m.coords
    P = M.matrix_canon
    w, *_ = np.linalg.lstsq(P.T, m.coords, rcond=None)
    resid = np.linalg.norm(P.T @ w - m.coords)
    if resid > 1e-8 * max(1.0, np.linalg.norm(m.coords)):
        warnings.warn(f"objective functional is not observable through M (residual {resid:.3g})",
                      RuntimeWarning, stacklevel=2)
    return w


def functional_coords(M: MeasurementOperator, m, spectrum: InducedSpectrum):
    """Coordinates of the objective functional in the retained eigenbasis.

    For the identity ``m`` is an output-space functional; for a projection it is
    the weight vector ``w`` in measurement coordinates (a :class:`HilbertVector`
    is pulled back through ``M^*`` first).

    Returns
    -------
    m_bar : array of shape (n,)
    m_norm : float
        Norm of ``m`` in the measurement space.
    """
    if isinstance(m, HilbertVector):
        m_meas = m.coords if M.kind == "identity" else pullback_functional(M, m)
    else:
        m_meas = np.asarray(m, dtype=float).ravel()
    if m_meas.size != spectrum.dim:
        raise ValueError(f"functional has {m_meas.size} coordinates, measurement space has {spectrum.dim}")
    m_bar = spectrum.eigvecs.T @ m_meas
    total = float(m_meas @ m_meas)
    kept = float(m_bar @ m_bar)
    rho = spectrum.policy[1] if spectrum.policy[0] == "energy" else DEFAULT_ENERGY
    if total > 0.0 and kept < rho * total - 1e-12 * total:
        msg = f"truncated spectrum keeps {kept / total:.6f} of the objective functional's energy"
        log.warning(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return m_bar, float(np.sqrt(total))


def adjoint_lift(M: MeasurementOperator, v) -> HilbertVector:
    """``M^* v`` as an output-space vector."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.size != M.dim:
        raise ValueError(f"expected {M.dim} measurement coordinates, got {v.size}")
    return HilbertVector.from_coords(M.grid, M.matrix_canon.T @ v)
