"""Training objective: similarity reconstruction, cross-modal agreement,
and correlation-preserving terms, with analytic gradients.

All three terms compare pairwise cosine matrices of the two batches of
soft codes.  Frobenius norms are raw sums over the m x m pair grid (no
1/m^2 averaging); the published learning rate is calibrated against this
convention at batch size 32.

Loss, with C_xy = cos(H_x, H_y) and S/R the semantic/correlation batch
slices:

    sr = |S - C_it|^2 + |S - C_ii|^2 + |S - C_tt|^2
    sa = |C_ii - C_tt|^2 + |C_it - C_ii|^2 + |C_it - C_tt|^2
    cp = sum R * (C_it - beta)^2
    total = sr + mu1 * cp + mu2 * sa

A freeze mode turns one side into a constant (used when that side is a
detached binary code matrix); its gradient is exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, DivergenceError

FREEZE_MODES = ("none", "image", "text")


@dataclass
class LossWeights:
    """Term weights: mu1 on the correlation term, mu2 on agreement, plus
    the target cosine level beta for correlated pairs."""

    mu1: float = 2.0
    mu2: float = 1.0
    beta: float = 1.5

    def validate(self) -> None:
        if not (np.isfinite(self.mu1) and self.mu1 >= 0):
            raise ConfigError(f"mu1 must be a finite real >= 0, got {self.mu1}")
        if not (np.isfinite(self.mu2) and self.mu2 >= 0):
            raise ConfigError(f"mu2 must be a finite real >= 0, got {self.mu2}")
        if not (np.isfinite(self.beta) and self.beta >= 1):
            raise ConfigError(f"beta must be a finite real >= 1, got {self.beta}")


@dataclass
class LossOutput:
    total: float
    sr: float
    sa: float
    cp: float
    grad_image: np.ndarray
    grad_text: np.ndarray


def _normalized(h: np.ndarray, side: str) -> tuple[np.ndarray, np.ndarray]:
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2:
        raise DataError(f"{side}: expected a 2-d matrix, got shape {h.shape}")
    norms = np.linalg.norm(h, axis=1)
    if np.any(norms == 0.0):
        raise DivergenceError(
            f"{side}: zero-norm row {int(np.argmax(norms == 0.0))} "
            "(cosine undefined; training diverged)"
        )
    return h / norms[:, None], norms


def pairwise_cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """out[i, j] = cosine of a's row i with b's row j."""
    a_hat, _ = _normalized(a, "first argument")
    b_hat, _ = _normalized(b, "second argument")
    if a_hat.shape[1] != b_hat.shape[1]:
        raise DataError(
            f"pairwise_cosine: column mismatch {a_hat.shape[1]} vs {b_hat.shape[1]}"
        )
    return a_hat @ b_hat.T


def loss_sr(hi: np.ndarray, ht: np.ndarray, s_batch: np.ndarray) -> float:
    """Semantic reconstruction: S against all three cosine matrices."""
    s = np.asarray(s_batch, dtype=np.float64)
    return float(
        ((s - pairwise_cosine(hi, ht)) ** 2).sum()
        + ((s - pairwise_cosine(hi, hi)) ** 2).sum()
        + ((s - pairwise_cosine(ht, ht)) ** 2).sum()
    )


def loss_sa(hi: np.ndarray, ht: np.ndarray) -> float:
    """Agreement between the intra- and cross-modal cosine views."""
    c_it = pairwise_cosine(hi, ht)
    c_ii = pairwise_cosine(hi, hi)
    c_tt = pairwise_cosine(ht, ht)
    return float(
        ((c_ii - c_tt) ** 2).sum()
        + ((c_it - c_ii) ** 2).sum()
        + ((c_it - c_tt) ** 2).sum()
    )


def loss_cp(hi: np.ndarray, ht: np.ndarray, r_batch: np.ndarray,
            beta: float) -> float:
    """Pull correlated pairs' cross-modal cosine toward beta.

    The mask is elementwise, so only pairs in the relation contribute.
    beta above the cosine ceiling keeps pulling saturated pairs together.
    """
    r = np.asarray(r_batch, dtype=np.float64)
    c_it = pairwise_cosine(hi, ht)
    return float((r * (c_it - beta) ** 2).sum())


def _grad_pair(g: np.ndarray, c: np.ndarray, a_hat: np.ndarray,
               a_norms: np.ndarray, b_hat: np.ndarray,
               b_norms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # d cos(a_i, b_j) / d a_i = (b_hat_j - c_ij * a_hat_i) / |a_i|
    d_a = (g @ b_hat - (g * c).sum(axis=1)[:, None] * a_hat) / a_norms[:, None]
    d_b = (g.T @ a_hat - (g * c).sum(axis=0)[:, None] * b_hat) / b_norms[:, None]
    return d_a, d_b


def _grad_self(g: np.ndarray, c: np.ndarray, a_hat: np.ndarray,
               a_norms: np.ndarray) -> np.ndarray:
    # rows appear on both sides of cos(A, A): fold g and g.T together
    h = g + g.T
    return (h @ a_hat - (h * c).sum(axis=1)[:, None] * a_hat) / a_norms[:, None]


def total_loss_and_grads(hi: np.ndarray, ht: np.ndarray,
                         s_batch: np.ndarray, r_batch: np.ndarray,
                         weights: LossWeights,
                         freeze: str = "none") -> LossOutput:
    """Weighted objective plus dL/dHi and dL/dHt.

    With freeze == "image" or "text", the frozen side is treated as a
    constant: the loss value is unchanged and its gradient is exactly
    zero.  Terms touching only the frozen side drop out of the other
    gradient on their own; no special-casing is needed.
    """
    weights.validate()
    if freeze not in FREEZE_MODES:
        raise ConfigError(f"freeze must be one of {FREEZE_MODES}, got '{freeze}'")
    hi_hat, hi_norms = _normalized(hi, "image batch")
    ht_hat, ht_norms = _normalized(ht, "text batch")
    m = hi_hat.shape[0]
    if ht_hat.shape != hi_hat.shape:
        raise DataError(f"batch shapes differ: {hi_hat.shape} vs {ht_hat.shape}")
    s = np.asarray(s_batch, dtype=np.float64)
    r = np.asarray(r_batch, dtype=np.float64)
    if s.shape != (m, m) or r.shape != (m, m):
        raise DataError(
            f"batch slices must be {m}x{m}, got S {s.shape} and R {r.shape}"
        )

    c_it = hi_hat @ ht_hat.T
    c_ii = hi_hat @ hi_hat.T
    c_tt = ht_hat @ ht_hat.T

    sr = float(((s - c_it) ** 2).sum() + ((s - c_ii) ** 2).sum()
               + ((s - c_tt) ** 2).sum())
    sa = float(((c_ii - c_tt) ** 2).sum() + ((c_it - c_ii) ** 2).sum()
               + ((c_it - c_tt) ** 2).sum())
    cp = float((r * (c_it - weights.beta) ** 2).sum())
    total = sr + weights.mu1 * cp + weights.mu2 * sa

    g_it = 2.0 * (c_it - s) \
        + weights.mu1 * 2.0 * r * (c_it - weights.beta) \
        + weights.mu2 * 2.0 * ((c_it - c_ii) + (c_it - c_tt))
    g_ii = 2.0 * (c_ii - s) \
        + weights.mu2 * (2.0 * (c_ii - c_tt) - 2.0 * (c_it - c_ii))
    g_tt = 2.0 * (c_tt - s) \
        + weights.mu2 * (-2.0 * (c_ii - c_tt) - 2.0 * (c_it - c_tt))

    d_hi_pair, d_ht_pair = _grad_pair(g_it, c_it, hi_hat, hi_norms,
                                      ht_hat, ht_norms)
    if freeze == "image":
        grad_image = np.zeros_like(hi_hat)
    else:
        grad_image = d_hi_pair + _grad_self(g_ii, c_ii, hi_hat, hi_norms)
    if freeze == "text":
        grad_text = np.zeros_like(ht_hat)
    else:
        grad_text = d_ht_pair + _grad_self(g_tt, c_tt, ht_hat, ht_norms)
    return LossOutput(total=total, sr=sr, sa=sa, cp=cp,
                      grad_image=grad_image, grad_text=grad_text)
