"""Expected improvement."""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def expected_improvement(mean, variance, incumbent_best: float, maximize: bool = True):
    """Closed-form EI; returns a float for scalar input, an array otherwise."""
    mean = np.asarray(mean, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if np.any(variance < 0):
        raise ValueError("variance must be non-negative")
    improvement = mean - incumbent_best if maximize else incumbent_best - mean
    sd = np.sqrt(variance)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, improvement / np.where(sd > 0, sd, 1.0), 0.0)
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    ei = np.where(sd > 0, improvement * ndtr(z) + sd * pdf, np.maximum(improvement, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei
