"""Per-tensor pre-scaling to the full [-1, 1] range and its inverse."""

import numpy as np

from .errors import NonFiniteInput


def prescale(values):
    """Divide ``values`` by their largest magnitude.

    Returns ``(scaled, factor)``. The element of largest magnitude maps to
    exactly +/-1.0. An all-zero (or empty) input keeps ``factor == 1.0``.
    """
    v = np.asarray(values, dtype=np.float32)
    if not np.all(np.isfinite(v)):
        raise NonFiniteInput("prescale input contains NaN/Inf")
    peak = np.float32(np.max(np.abs(v))) if v.size else np.float32(0.0)
    if peak == 0:
        return v.copy(), 1.0
    return (v / peak).astype(np.float32), float(peak)


def unprescale(scaled, factor):
    return (np.asarray(scaled, dtype=np.float32) * np.float32(factor)).astype(np.float32)
