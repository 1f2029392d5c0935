"""Small numeric helpers shared across scoring modules."""

from __future__ import annotations

import numpy as np


def softmax(scores, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax; invariant to constant shifts."""
    x = np.asarray(scores, dtype=float)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=axis, keepdims=True)


def entropy(probs) -> float:
    """Shannon entropy in nats, with 0 * log(0) taken as 0."""
    p = np.asarray(probs, dtype=float)
    if np.any(p < 0.0):
        raise ValueError("entropy requires non-negative probabilities")
    nonzero = p[p > 0.0]
    return float(-(nonzero * np.log(nonzero)).sum())
