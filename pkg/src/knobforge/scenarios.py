"""Synthetic catalogs and planted surfaces for desk-scale experiments."""

from __future__ import annotations

import numpy as np

from .knobspace import INTEGER, REAL, ConfigurationSpace, Knob
from .target import ImportantKnob, SimulatedTarget, SynthSurfaceSpec


def synthetic_catalog(n_knobs: int, seed: int = 0, prefix: str = "knob") -> ConfigurationSpace:
    """Alternating integer/real knobs with defaults near the low end of their range."""
    rng = np.random.default_rng(seed)
    knobs = []
    for i in range(n_knobs):
        name = f"{prefix}_{i:02d}"
        if i % 2 == 0:
            hi = int(rng.choice([1000, 4000, 10000]))
            default = int(round(0.1 * hi))
            knobs.append(Knob(name, INTEGER, default, 0, hi, unit="pages", description=f"integer test knob {i}"))
        else:
            knobs.append(Knob(name, REAL, 0.1, 0.0, 1.0, description=f"real-valued test knob {i}"))
    return ConfigurationSpace(knobs)


def planted_surface(
    space: ConfigurationSpace,
    n_important: int = 3,
    seed: int = 0,
    base_objective: float = 10.0,
    shapes: tuple[str, ...] = ("quadratic",),
    weights: tuple[float, ...] | None = None,
    noise_sd: float = 0.0,
) -> SynthSurfaceSpec:
    """Plant ``n_important`` knobs with optima in [0.55, 0.9], far from the low defaults."""
    rng = np.random.default_rng(seed)
    names = [space.names[i] for i in sorted(rng.choice(space.dimension, n_important, replace=False))]
    if weights is None:
        weights = tuple(float(w) for w in np.linspace(100.0, 40.0, n_important))
    important = []
    for i, name in enumerate(names):
        optimum = float(np.round(rng.uniform(0.55, 0.9), 3))
        important.append(ImportantKnob(name, weights[i], optimum, shapes[i % len(shapes)]))
    return SynthSurfaceSpec(tuple(important), base_objective=base_objective, noise_sd=noise_sd, seed=seed)


def planted_target(n_knobs: int = 10, n_important: int = 3, seed: int = 0, **surface_kwargs) -> SimulatedTarget:
    space = synthetic_catalog(n_knobs, seed)
    return SimulatedTarget(space, planted_surface(space, n_important, seed, **surface_kwargs))
