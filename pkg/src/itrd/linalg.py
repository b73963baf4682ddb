"""Dense matrix primitives: normalization, Hadamard/Frobenius helpers and a
symmetric Jacobi eigensolver.

Matrices are plain ``float64`` numpy arrays. Every function returns a new
array and never modifies its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateKernelError, DimensionError, DomainError, NumericalError

STD_EPS = 1e-5
SYMMETRY_TOL = 1e-8
NEG_EIG_TOL = 1e-9
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
TRACE_FLOOR = 1e-12


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues sorted in descending order, with matching eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: Optional[np.ndarray] = None

    def reconstruct(self) -> np.ndarray:
        if self.eigenvectors is None:
            raise ValueError("eigenvectors were not retained")
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T


def _as_matrix(a, name="matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    return a


def _as_square(a, name="matrix") -> np.ndarray:
    a = _as_matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    return a


def batch_normalize(z, eps: float = STD_EPS, ddof: int = 0) -> np.ndarray:
    """Standardize each column to zero mean and unit variance over the batch.

    Columns are divided by ``max(std, eps)``: exact for ordinary columns, and
    constant columns map to zeros instead of dividing by zero. ``ddof=0`` uses
    the population standard deviation so that a column correlated with itself
    gives exactly 1.
    """
    return _standardize(z, eps, ddof)[0]


def _standardize(z, eps, ddof):
    """Batch normalization forward pass; also returns the centered data and std."""
    z = _as_matrix(z, "feature batch")
    n = z.shape[0]
    if n < 2:
        raise DimensionError(f"batch normalization needs at least 2 rows, got {n}")
    if eps <= 0:
        raise DomainError("eps must be positive")
    centered = z - z.mean(axis=0)
    # second pass removes the rounding error of the first mean, which 1/eps would amplify
    centered -= centered.mean(axis=0)
    std = np.sqrt((centered * centered).sum(axis=0) / (n - ddof))
    return centered / np.maximum(std, eps), centered, std


def l2_normalize_rows(z) -> np.ndarray:
    z = _as_matrix(z, "feature batch")
    norms = np.sqrt((z**2).sum(axis=1, keepdims=True))
    # all-zero rows pass through untouched
    safe = np.where(norms > 0.0, norms, 1.0)
    return z / safe


def hadamard(a, b) -> np.ndarray:
    a = _as_matrix(a)
    b = _as_matrix(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def frobenius_norm_sq(a) -> float:
    a = _as_matrix(a)
    return float(np.sum(a * a))


def trace_normalize(k) -> np.ndarray:
    k = _as_square(k, "kernel matrix")
    tr = float(np.trace(k))
    if tr <= TRACE_FLOOR:
        raise DegenerateKernelError(f"kernel trace {tr:.3e} is too small to normalize")
    return k / tr


def _round_robin(m: int):
    """Yield the m-1 rounds of a round-robin tournament over m (even) players.

    Each round is a pair of index arrays (p, q) of disjoint pairs covering every
    player once; across all rounds each unordered pair occurs exactly once.
    """
    players = list(range(m))
    half = m // 2
    for _ in range(m - 1):
        p = np.array(players[:half])
        q = np.array(players[::-1][:half])
        yield np.minimum(p, q), np.maximum(p, q)
        players = [players[0], players[-1]] + players[1:-1]


def _off_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.sqrt(np.sum(off * off)))


def jacobi_eigh(a, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS):
    """Cyclic Jacobi eigensolver for a real symmetric matrix.

    Sweeps visit every off-diagonal pair once, grouped in round-robin order so
    that the n/2 rotations of a round touch disjoint rows and can be applied
    together. Iteration stops once the off-diagonal Frobenius norm falls below
    ``tol * ||A||_F``.

    Returns ``(eigenvalues, eigenvectors)`` in the order they appear on the
    diagonal (unsorted).
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.sqrt(np.sum(a * a))
    if n == 1 or scale == 0.0:
        return np.diag(a).copy(), v

    m = n + (n % 2)
    rounds = []
    for p, q in _round_robin(m):
        keep = q < n  # drop pairs with the padding player
        rounds.append((p[keep], q[keep]))

    threshold = tol * scale
    for _ in range(max_sweeps):
        if _off_norm(a) <= threshold:
            return np.diag(a).copy(), v
        for p, q in rounds:
            apq = a[p, q]
            active = apq != 0.0
            if not active.any():
                continue
            app = a[p, p]
            aqq = a[q, q]
            safe_apq = np.where(active, apq, 1.0)
            with np.errstate(over="ignore", divide="ignore"):
                theta = (aqq - app) / (2.0 * safe_apq)
                # |theta| large: t ~ 1/(2 theta), avoids squaring overflow
                t = np.where(
                    np.abs(theta) > 1e150,
                    0.5 / theta,
                    np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0)),
                )
            t = np.where(theta == 0.0, 1.0, t)
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c

            cols_p = a[:, p]
            cols_q = a[:, q]
            a[:, p] = c * cols_p - s * cols_q
            a[:, q] = s * cols_p + c * cols_q
            rows_p = a[p, :]
            rows_q = a[q, :]
            a[p, :] = c[:, None] * rows_p - s[:, None] * rows_q
            a[q, :] = s[:, None] * rows_p + c[:, None] * rows_q
            a[p, q] = 0.0
            a[q, p] = 0.0

            vp = v[:, p]
            vq = v[:, q]
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
    if _off_norm(a) <= threshold:
        return np.diag(a).copy(), v
    raise NumericalError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")


def symmetric_eigenvalues(a, *, psd: bool = False, vectors: bool = False) -> SpectralDecomposition:
    """Eigen-decompose a symmetric matrix.

    With ``psd=True`` the input is asserted positive semidefinite: eigenvalues in
    ``[-1e-9, 0)`` are treated as round-off and clamped to zero, anything more
    negative raises :class:`DomainError`.
    """
    a = _as_square(a)
    if not np.all(np.isfinite(a)):
        raise DomainError("matrix has non-finite entries")
    asym = np.max(np.abs(a - a.T)) if a.size else 0.0
    if asym > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(a)))):
        raise DomainError(f"matrix is not symmetric (max |A - A^T| = {asym:.3e})")
    sym = 0.5 * (a + a.T)
    w, q = jacobi_eigh(sym)
    order = np.argsort(-w, kind="stable")
    w = w[order]
    q = q[:, order]
    if psd:
        if w.size and w[-1] < -NEG_EIG_TOL:
            raise DomainError(f"matrix is not positive semidefinite (eigenvalue {w[-1]:.3e})")
        w = np.where(w < 0.0, 0.0, w)
    return SpectralDecomposition(w, q if vectors else None)
