"""Latin hypercube designs."""

from __future__ import annotations

import numpy as np

from ..knobspace import Configuration, ConfigurationSpace, denormalize


def lhs_unit(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` points in ``[0, 1)^d``; every column visits each stratum ``[j/n, (j+1)/n)`` once."""
    if n < 1:
        raise ValueError("n must be >= 1")
    strata = np.argsort(rng.random((n, d)), axis=0)
    return (strata + rng.random((n, d))) / n


def lhs_sample(space: ConfigurationSpace, n: int, seed: int | np.random.Generator) -> list[Configuration]:
    """Latin hypercube sample of ``n`` configurations, deterministic per seed.

    Stratification is exact for real knobs; integer and enumeration knobs are
    rounded to the nearest legal value afterwards.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    unit = lhs_unit(n, space.dimension, rng)
    return [denormalize(space, row) for row in unit]
