"""Matrix-based Renyi alpha-entropy and the quantities built on it.

All entropies are in bits. Inputs to the entropy functionals are NPD matrices:
symmetric, positive semidefinite and trace one. Use :func:`gram_matrix` and
:func:`itrd.linalg.trace_normalize` to obtain one from a feature batch.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .linalg import (
    SYMMETRY_TOL,
    _as_square,
    hadamard,
    l2_normalize_rows,
    symmetric_eigenvalues,
    trace_normalize,
)

SHANNON_BAND = 1e-6
NPD_TRACE_TOL = 1e-9


class KernelKind(str, enum.Enum):
    LINEAR_ON_L2_ROWS = "linear_on_l2_rows"


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind = KernelKind.LINEAR_ON_L2_ROWS
    degree: int = 1


def gram_matrix(z, kernel: KernelSpec = KernelSpec()) -> np.ndarray:
    """Cosine-similarity Gram matrix: degree-1 polynomial kernel on unit rows."""
    if kernel.kind is not KernelKind.LINEAR_ON_L2_ROWS or kernel.degree != 1:
        raise DomainError(f"unsupported kernel {kernel}")
    u = l2_normalize_rows(z)
    g = u @ u.T
    return 0.5 * (g + g.T)


def _check_alpha(alpha) -> float:
    alpha = float(alpha)
    if not np.isfinite(alpha) or alpha <= 0.0:
        raise DomainError(f"alpha must be a finite positive number, got {alpha}")
    return alpha


def check_npd(a) -> np.ndarray:
    """Validate an NPD matrix and return it as a float array."""
    a = _as_square(a, "NPD matrix")
    if not np.all(np.isfinite(a)):
        raise DomainError("NPD matrix has non-finite entries")
    if np.max(np.abs(a - a.T)) > SYMMETRY_TOL:
        raise DomainError("NPD matrix must be symmetric")
    tr = float(np.trace(a))
    if abs(tr - 1.0) > NPD_TRACE_TOL:
        raise DomainError(f"NPD matrix must have unit trace, got {tr!r}")
    return a


def npd_spectrum(a) -> np.ndarray:
    """Clamped eigenvalues of an NPD matrix (descending).

    Eigenvalues at or below the rank tolerance ``n * eps * max(lambda)`` are
    round-off and set to zero; for alpha < 1 they would otherwise add
    ``lambda**alpha`` terms far above machine precision.
    """
    a = check_npd(a)
    return clean_spectrum(symmetric_eigenvalues(a, psd=True).eigenvalues)


def clean_spectrum(lam: np.ndarray) -> np.ndarray:
    if lam.size == 0:
        return lam
    tol = lam.size * np.finfo(np.float64).eps * max(float(lam[0]), 0.0)
    return np.where(lam > tol, lam, 0.0)


def _power_sum(lam: np.ndarray, alpha: float) -> float:
    pos = lam[lam > 0.0]
    # 0**alpha := 0 for every alpha > 0
    return float(np.sum(np.exp(alpha * np.log(pos))))


def _shannon(lam: np.ndarray) -> float:
    pos = lam[lam > 0.0]
    return float(-np.sum(pos * np.log2(pos)))


def entropy_from_spectrum(lam, alpha) -> float:
    alpha = _check_alpha(alpha)
    lam = np.asarray(lam, dtype=np.float64)
    if abs(alpha - 1.0) < SHANNON_BAND:
        return _shannon(lam)
    return float(np.log2(_power_sum(lam, alpha)) / (1.0 - alpha))


def matrix_entropy(a, alpha) -> float:
    """Renyi alpha-entropy of an NPD matrix, from its eigenvalues.

    Orders within 1e-6 of 1 are evaluated with the Shannon limit.
    """
    alpha = _check_alpha(alpha)
    return entropy_from_spectrum(npd_spectrum(a), alpha)


def shannon_entropy_limit(a) -> float:
    return _shannon(npd_spectrum(a))


def information_potential(a, alpha) -> float:
    """``tr(A**alpha)``, the argument of the log in :func:`matrix_entropy`."""
    alpha = _check_alpha(alpha)
    return _power_sum(npd_spectrum(a), alpha)


def joint_matrix(a, b) -> np.ndarray:
    """Trace-normalized Hadamard product of two NPD matrices."""
    a = check_npd(a)
    b = check_npd(b)
    return trace_normalize(hadamard(a, b))


def joint_entropy(a, b, alpha) -> float:
    return matrix_entropy(joint_matrix(a, b), alpha)


def mutual_information(a, b, alpha) -> float:
    """``S(A) + S(B) - S(A, B)``.

    Not guaranteed nonnegative for arbitrary NPD pairs; on Gram matrices built
    from data it is nonnegative up to round-off.
    """
    return matrix_entropy(a, alpha) + matrix_entropy(b, alpha) - joint_entropy(a, b, alpha)

