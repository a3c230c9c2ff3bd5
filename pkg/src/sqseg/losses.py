"""Hybrid soft-Dice + cross-entropy training objective.

    L = [1 - (2*sum(p*g) + eps) / (sum(p^2) + sum(g^2) + eps)]
        + [-(1/N) * sum(g * log(clip(p)))]

with eps = 1 guarding the Dice ratio and predictions clamped to
[1e-7, 1] before the log. The cross-entropy term penalizes foreground
only; pass symmetric_bce=True to add the matching -(1-g)*log(1-p) term.

The analytic gradient exists so the implementation can be verified against
finite differences and so the head can be nudged without an autograd stack.
"""

from __future__ import annotations

import numpy as np

EPS = 1.0
LOG_CLAMP = 1e-7


def _check_inputs(p: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"prediction shape {p.shape} != ground truth shape {g.shape}")
    if not np.all((g == 0) | (g == 1)):
        raise ValueError("ground truth must be binary")
    return p, g


def hybrid_loss(p: np.ndarray, g: np.ndarray, symmetric_bce: bool = False) -> float:
    """Scalar loss; 0 exactly when p = g and g is binary."""
    p, g = _check_inputs(p, g)
    n = p.size
    a = float(np.sum(p * g))
    b = float(np.sum(p * p))
    c = float(np.sum(g))  # g binary, so sum(g^2) = sum(g)
    dice = 1.0 - (2.0 * a + EPS) / (b + c + EPS)
    ce = -float(np.sum(g * np.log(np.clip(p, LOG_CLAMP, 1.0)))) / n
    if symmetric_bce:
        ce -= float(np.sum((1.0 - g) * np.log(np.clip(1.0 - p, LOG_CLAMP, 1.0)))) / n
    return dice + ce


def hybrid_loss_grad(p: np.ndarray, g: np.ndarray, symmetric_bce: bool = False) -> np.ndarray:
    """Elementwise dL/dp of hybrid_loss, zero where the log clamp is active."""
    p, g = _check_inputs(p, g)
    n = p.size
    a = np.sum(p * g)
    b = np.sum(p * p)
    c = np.sum(g)
    denom = b + c + EPS
    # d/dp of -(2A+eps)/(B+C+eps): quotient rule over the two sums
    grad = -(2.0 * g * denom - (2.0 * a + EPS) * 2.0 * p) / (denom * denom)
    inside = (p >= LOG_CLAMP) & (p <= 1.0)
    grad -= np.where(inside, g / np.clip(p, LOG_CLAMP, 1.0), 0.0) / n
    if symmetric_bce:
        q = 1.0 - p
        inside = (q >= LOG_CLAMP) & (q <= 1.0)
        grad += np.where(inside, (1.0 - g) / np.clip(q, LOG_CLAMP, 1.0), 0.0) / n
    return grad
