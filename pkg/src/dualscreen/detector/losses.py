"""Focal loss with analytic gradient, plus smooth-L1 for box regression."""

from __future__ import annotations

import numpy as np

PROB_EPS = 1e-7


def focal_loss(
    probs: np.ndarray,
    labels: np.ndarray,
    gamma: float = 2.0,
    alpha: float = 0.25,
    background_index: int = 0,
) -> tuple[float, np.ndarray]:
    """Mean focal loss over rows of a (N, K) probability matrix.

    Each row must sum to 1; labels holds the true class index per row.
    The per-row term is -alpha_t * (1 - p_t)^gamma * log(p_t) where p_t is
    the probability of the true label, alpha_t = alpha for foreground rows
    and 1 - alpha for rows labelled background_index. With gamma = 0 and
    alpha = 0.5 this is exactly half the cross-entropy.

    Returns (loss, gradient w.r.t. probs). Probabilities at 0 or 1 are
    clamped to [eps, 1 - eps] before the log.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if not 0 < alpha <= 1:
        raise ValueError("alpha must be in (0, 1]")
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = probs.shape
    if not np.allclose(probs.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("probability rows must sum to 1")

    p_t = np.clip(probs[np.arange(n), labels], PROB_EPS, 1.0 - PROB_EPS)
    alpha_t = np.where(labels == background_index, 1.0 - alpha, alpha)
    one_minus = 1.0 - p_t
    loss = float(np.mean(alpha_t * one_minus**gamma * -np.log(p_t)))

    # d/dp [-(1-p)^g log p] = g (1-p)^(g-1) log p - (1-p)^g / p
    if gamma == 0:
        dldp = -1.0 / p_t
    else:
        dldp = gamma * one_minus ** (gamma - 1.0) * np.log(p_t) - one_minus**gamma / p_t
    grad = np.zeros_like(probs)
    grad[np.arange(n), labels] = alpha_t * dldp / n
    return loss, grad


def smooth_l1(diff: np.ndarray, beta: float = 1.0 / 9.0) -> np.ndarray:
    """Elementwise smooth-L1 (Huber) penalty."""
    ad = np.abs(diff)
    return np.where(ad < beta, 0.5 * diff**2 / beta, ad - 0.5 * beta)
