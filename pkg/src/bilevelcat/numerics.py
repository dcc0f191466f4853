"""Small numerical helpers shared by several modules."""

from __future__ import annotations

import numpy as np


def sigmoid(x):
    """Numerically stable logistic function.

    Uses the two-branch form (x >= 0 vs x < 0) so exp never overflows.
    Accepts floats or ndarrays and preserves the input kind.
    """
    x_arr = np.asarray(x, dtype=float)
    out = np.empty_like(x_arr)
    pos = x_arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x_arr[pos]))
    ex = np.exp(x_arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    if np.isscalar(x) or x_arr.ndim == 0:
        return float(out)
    return out


def format_float(value: float) -> str:
    """Shortest round-trip decimal form, used by every CSV emitter."""
    return repr(float(value))
