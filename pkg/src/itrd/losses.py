"""Correlation and mutual-information distillation losses with analytic gradients.

Every loss takes the student batch ``zs`` and the teacher batch ``zt`` (rows are
samples). The teacher is a constant: no function here ever returns a gradient
with respect to ``zt``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .entropy import clean_spectrum, entropy_from_spectrum, gram_matrix
from .errors import DegenerateKernelError, DimensionError, DomainError
from .linalg import STD_EPS, TRACE_FLOOR, _as_matrix, _standardize, symmetric_eigenvalues

LN2 = math.log(2.0)
POW_TINY = 1e-30


class MiVariant(str, enum.Enum):
    NO_LOG = "no_log"
    LOG_POTENTIAL = "log_potential"
    EIGEN_EXACT = "eigen_exact"


@dataclass(frozen=True)
class ItrdConfig:
    """Hyperparameters of the combined objective.

    Defaults are the same-architecture setting; use ``alpha_corr=1.5`` for
    cross-architecture pairs.
    """

    alpha_corr: float = 1.01
    alpha_mi: float = 2.0
    beta_corr: float = 2.0
    beta_mi: float = 1.0
    mi_variant: MiVariant = MiVariant.NO_LOG
    corr_log_floor: float = 1e-12
    std_eps: float = STD_EPS
    std_ddof: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mi_variant", MiVariant(self.mi_variant))
        for name in ("alpha_corr", "alpha_mi", "beta_corr", "beta_mi", "corr_log_floor", "std_eps"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value}")
        if self.alpha_corr <= 0 or self.alpha_mi <= 0:
            raise DomainError("alpha values must be positive")
        if self.beta_corr < 0 or self.beta_mi < 0:
            raise DomainError("beta weights must be nonnegative")
        if self.corr_log_floor <= 0 or self.std_eps <= 0:
            raise DomainError("corr_log_floor and std_eps must be positive")
        if self.std_ddof not in (0, 1):
            raise DomainError("std_ddof must be 0 (population) or 1 (sample)")

    def to_dict(self) -> dict:
        return {
            "alpha_corr": self.alpha_corr,
            "alpha_mi": self.alpha_mi,
            "beta_corr": self.beta_corr,
            "beta_mi": self.beta_mi,
            "mi_variant": self.mi_variant.value,
            "corr_log_floor": self.corr_log_floor,
            "std_eps": self.std_eps,
            "std_ddof": self.std_ddof,
        }


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    corr: float
    mi: float
    xent: float


@dataclass
class EmbeddingLayer:
    """Linear map ``x @ weight + bias`` from student to teacher feature width."""

    weight: np.ndarray
    bias: np.ndarray
    trainable: bool = True

    @classmethod
    def init(cls, d_in: int, d_out: int, rng: np.random.Generator, trainable: bool = True):
        limit = math.sqrt(6.0 / (d_in + d_out))
        weight = rng.uniform(-limit, limit, size=(d_in, d_out))
        return cls(weight, np.zeros(d_out), trainable)

    @property
    def d_in(self) -> int:
        return self.weight.shape[0]

    @property
    def d_out(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x) -> np.ndarray:
        x = _as_matrix(x)
        if x.shape[1] != self.d_in:
            raise DimensionError(f"embedding expects {self.d_in} columns, got {x.shape[1]}")
        return x @ self.weight + self.bias

    def backward(self, x, grad_out):
        """Return ``(grad_x, grad_weight, grad_bias)``."""
        return grad_out @ self.weight.T, x.T @ grad_out, grad_out.sum(axis=0)


@dataclass(frozen=True)
class ItrdGrads:
    zs: np.ndarray
    embed_weight: Optional[np.ndarray] = None
    embed_bias: Optional[np.ndarray] = None


def _check_pair(zs, zt, min_rows=2):
    zs = _as_matrix(zs, "student batch")
    zt = _as_matrix(zt, "teacher batch")
    if zs.shape != zt.shape:
        raise DimensionError(f"student {zs.shape} and teacher {zt.shape} shapes differ")
    if zs.shape[0] < min_rows:
        raise DimensionError(f"need at least {min_rows} rows, got {zs.shape[0]}")
    return zs, zt


# -- correlation ------------------------------------------------------------


def _normalize_fwd(z, eps, ddof):
    out, x, std = _standardize(z, eps, ddof)
    return out, (x, std > eps, np.maximum(std, eps), z.shape[0] - ddof)


def _normalize_bwd(g, cache):
    x, live, s, dof = cache
    # d std / d x = x / (dof * std); the divisor is the constant eps when std <= eps
    inv = np.where(live, 1.0 / (dof * s), 0.0)
    dx = g / s - x * ((g * x).sum(axis=0) / (s * s) * inv)
    return dx - dx.mean(axis=0)


def cross_correlation_diag(zs, zt, std_eps: float = STD_EPS, ddof: int = 0) -> np.ndarray:
    """Diagonal of the cross-correlation matrix of batch-normalized features."""
    zs, zt = _check_pair(zs, zt)
    hs, _ = _normalize_fwd(zs, std_eps, ddof)
    ht, _ = _normalize_fwd(zt, std_eps, ddof)
    return np.einsum("bi,bi->i", hs, ht) / zs.shape[0]


def _corr_terms(v, alpha):
    return np.exp(alpha * np.log((v - 1.0) ** 2 + POW_TINY))


def correlation_loss(v, alpha_corr: float = 1.01, log_floor: float = 1e-12) -> float:
    """``log2 sum_i |v_i - 1|^(2 alpha)``, with the sum clamped below at ``log_floor``."""
    v = np.asarray(v, dtype=np.float64)
    total = float(np.sum(_corr_terms(v, alpha_corr)))
    return math.log2(max(total, log_floor))


def correlation_loss_and_grad(zs, zt, cfg: ItrdConfig = ItrdConfig()):
    zs, zt = _check_pair(zs, zt)
    n = zs.shape[0]
    hs, cache = _normalize_fwd(zs, cfg.std_eps, cfg.std_ddof)
    ht, _ = _normalize_fwd(zt, cfg.std_eps, cfg.std_ddof)
    v = np.einsum("bi,bi->i", hs, ht) / n
    terms = _corr_terms(v, cfg.alpha_corr)
    total = float(terms.sum())
    if total <= cfg.corr_log_floor:
        return math.log2(cfg.corr_log_floor), np.zeros_like(zs)
    dv = cfg.alpha_corr * terms / ((v - 1.0) ** 2 + POW_TINY) * 2.0 * (v - 1.0) / (total * LN2)
    grad = _normalize_bwd(ht * (dv / n), cache)
    return math.log2(total), grad


def correlation_loss_grad(zs, zt, cfg: ItrdConfig = ItrdConfig()) -> np.ndarray:
    return correlation_loss_and_grad(zs, zt, cfg)[1]


# -- mutual information ------------------------------------------------------


def _mi_parts(zs, zt):
    gs = gram_matrix(zs)
    gt = gram_matrix(zt)
    gst = gs * gt
    ts = float(np.trace(gs))
    tst = float(np.trace(gst))
    if ts <= TRACE_FLOOR or tst <= TRACE_FLOOR:
        raise DegenerateKernelError("student or joint Gram matrix has vanishing trace")
    return gs, gt, gst, ts, tst


def _spectral_entropy_and_grad(a, alpha):
    """Entropy of an NPD matrix and its gradient w.r.t. the matrix entries."""
    dec = symmetric_eigenvalues(a, psd=True, vectors=True)
    lam, q = clean_spectrum(dec.eigenvalues), dec.eigenvectors
    value = entropy_from_spectrum(lam, alpha)
    pos = lam > 0.0
    if abs(alpha - 1.0) < 1e-6:
        dlam = np.where(pos, -(np.log(np.where(pos, lam, 1.0)) + 1.0) / LN2, 0.0)
    else:
        safe = np.where(pos, lam, 1.0)
        potential = float(np.sum(np.where(pos, safe**alpha, 0.0)))
        dlam = np.where(pos, alpha * safe ** (alpha - 1.0), 0.0) / ((1.0 - alpha) * LN2 * potential)
    return value, (q * dlam) @ q.T


def _mi_value_and_normalized_grads(gs, gst, ts, tst, variant, alpha):
    """Loss value and its gradients w.r.t. the trace-normalized matrices."""
    a_s = gs / ts
    a_st = gst / tst
    if variant is MiVariant.EIGEN_EXACT:
        h_s, m_s = _spectral_entropy_and_grad(a_s, alpha)
        h_st, m_st = _spectral_entropy_and_grad(a_st, alpha)
        return h_st - h_s, -m_s, m_st
    p_s = float(np.sum(a_s * a_s))
    p_st = float(np.sum(a_st * a_st))
    if variant is MiVariant.NO_LOG:
        return p_s - p_st, 2.0 * a_s, -2.0 * a_st
    if variant is MiVariant.LOG_POTENTIAL:
        value = math.log2(p_s) - math.log2(p_st)
        return value, 2.0 * a_s / (LN2 * p_s), -2.0 * a_st / (LN2 * p_st)
    raise DomainError(f"unknown MI variant {variant!r}")


def mi_loss(zs, zt, variant=MiVariant.NO_LOG, alpha: float = 2.0) -> float:
    """Mutual-information loss between student and teacher batches.

    ``no_log``: ``||Gs||^2 - ||Gst||^2``; ``log_potential``: the same in log2;
    ``eigen_exact``: ``S(Gst) - S(Gs)`` at order ``alpha``. All matrices are
    trace-normalized cosine Gram matrices and ``Gst = Gs * Gt``.
    """
    variant = MiVariant(variant)
    zs, zt = _check_pair(zs, zt, min_rows=1)
    gs, _, gst, ts, tst = _mi_parts(zs, zt)
    a_s = gs / ts
    a_st = gst / tst
    if variant is MiVariant.EIGEN_EXACT:
        h_st = entropy_from_spectrum(clean_spectrum(symmetric_eigenvalues(a_st, psd=True).eigenvalues), alpha)
        h_s = entropy_from_spectrum(clean_spectrum(symmetric_eigenvalues(a_s, psd=True).eigenvalues), alpha)
        return h_st - h_s
    p_s = float(np.sum(a_s * a_s))
    p_st = float(np.sum(a_st * a_st))
    if variant is MiVariant.NO_LOG:
        return p_s - p_st
    return math.log2(p_s) - math.log2(p_st)


def mi_loss_and_grad(zs, zt, variant=MiVariant.NO_LOG, alpha: float = 2.0):
    variant = MiVariant(variant)
    zs, zt = _check_pair(zs, zt, min_rows=1)
    gs, gt, gst, ts, tst = _mi_parts(zs, zt)
    value, m_s, m_st = _mi_value_and_normalized_grads(gs, gst, ts, tst, variant, alpha)

    # back through K -> K / tr(K)
    eye = np.eye(gs.shape[0])
    d_gs = (m_s - np.sum(m_s * gs) / ts * eye) / ts
    d_gst = (m_st - np.sum(m_st * gst) / tst * eye) / tst
    d_gs = d_gs + d_gst * gt
    d_gs = 0.5 * (d_gs + d_gs.T)

    # back through G = U U^T and the row normalization U = Z / ||Z||
    norms = np.sqrt((zs * zs).sum(axis=1, keepdims=True))
    nonzero = norms > 0.0
    safe = np.where(nonzero, norms, 1.0)
    u = zs / safe
    d_u = 2.0 * d_gs @ u
    d_z = (d_u - u * (u * d_u).sum(axis=1, keepdims=True)) / safe
    return value, np.where(nonzero, d_z, 0.0)


def mi_loss_grad(zs, zt, variant=MiVariant.NO_LOG, alpha: float = 2.0) -> np.ndarray:
    return mi_loss_and_grad(zs, zt, variant, alpha)[1]


# -- combined objective -------------------------------------------------------


def _embed(zs_raw, zt, embed):
    zs_raw = _as_matrix(zs_raw, "student batch")
    if embed is not None:
        return embed(zs_raw)
    if zs_raw.shape[1] != zt.shape[1]:
        raise DimensionError(
            f"student width {zs_raw.shape[1]} differs from teacher width {zt.shape[1]}; an embedding is required"
        )
    return zs_raw


def itrd_loss(zs_raw, zt, embed: Optional[EmbeddingLayer] = None, xent: float = 0.0,
              cfg: ItrdConfig = ItrdConfig()) -> LossBreakdown:
    """``xent + beta_corr * corr + beta_mi * mi`` on embedded student features."""
    return itrd_loss_and_grad(zs_raw, zt, embed, xent, cfg)[0]


def itrd_loss_and_grad(zs_raw, zt, embed: Optional[EmbeddingLayer] = None, xent: float = 0.0,
                       cfg: ItrdConfig = ItrdConfig()):
    """Loss breakdown plus gradients w.r.t. the raw student batch and the embedding."""
    zt = _as_matrix(zt, "teacher batch")
    zs = _embed(zs_raw, zt, embed)
    corr, g_corr = correlation_loss_and_grad(zs, zt, cfg)
    mi, g_mi = mi_loss_and_grad(zs, zt, cfg.mi_variant, cfg.alpha_mi)
    total = xent + cfg.beta_corr * corr + cfg.beta_mi * mi
    g = cfg.beta_corr * g_corr + cfg.beta_mi * g_mi
    breakdown = LossBreakdown(total=total, corr=corr, mi=mi, xent=xent)
    if embed is None:
        return breakdown, ItrdGrads(zs=g)
    g_x, g_w, g_b = embed.backward(np.asarray(zs_raw, dtype=np.float64), g)
    return breakdown, ItrdGrads(zs=g_x, embed_weight=g_w, embed_bias=g_b)
