"""Model-based tuning loops: GP-surrogate BO (VBO) and random-forest SMAC.

Both loops share one driver. Iteration 0 evaluates the default
configuration, iterations ``1..init_points`` evaluate the seeds followed by
a Latin hypercube fill, and every later iteration evaluates the
expected-improvement maximizer over a candidate pool of 2048 LHS points
plus local perturbations of the incumbent.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from ..knobspace import Configuration, ConfigurationSpace, coerce_configuration, denormalize, normalize
from ..metrics import RunHistory
from ..target import Observation, is_maximize, run_trial
from .acquisition import expected_improvement
from .forest import forest_fit
from .gp import FitFailed, gp_fit, gp_predict
from .lhs import lhs_sample, lhs_unit

log = logging.getLogger(__name__)


class OptimizationAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class TunerBudget:
    max_iterations: int
    init_points: int = 10
    rng_seed: int = 0
    candidates: int = 2048
    local_candidates: int = 10
    local_scale: float = 0.05

    def __post_init__(self) -> None:
        if self.init_points < 1:
            raise ValueError("init_points must be >= 1")
        if self.init_points > self.max_iterations:
            raise ValueError("init_points must not exceed max_iterations")


def _prepare_seeds(space: ConfigurationSpace, seeds: Sequence[Configuration] | None, budget: TunerBudget) -> list[Configuration]:
    out: list[Configuration] = []
    for seed in seeds or ():
        checked = coerce_configuration(space, seed)
        if not checked.ok:
            raise ValueError(f"seed configuration invalid for this space: {checked.violations}")
        out.append(checked.config)
    if len(out) > budget.init_points:
        raise ValueError(f"{len(out)} seeds exceed init_points={budget.init_points}")
    return out


def _row_key(row: np.ndarray) -> tuple:
    return tuple(np.round(row, 12).tolist())


class _Driver:
    def __init__(self, target, space, budget, history, on_observation):
        self.target = target
        self.space = space
        self.budget = budget
        self.history = history
        self.maximize = is_maximize(target.objective_kind)
        self.on_observation = on_observation
        self.seen: set[tuple] = {_row_key(normalize(space, o.config)) for o in history.observations}

    def evaluate(self, config: Configuration) -> Observation:
        obs = run_trial(self.target, config, self.history.next_iteration)
        self.history.append(obs)
        self.seen.add(_row_key(normalize(self.space, config)))
        if self.on_observation is not None:
            self.on_observation(obs)
        return obs

    def data(self) -> tuple[np.ndarray, np.ndarray]:
        ok = self.history.successful()
        X = np.array([normalize(self.space, o.config) for o in ok])
        y = np.array([o.objective for o in ok], dtype=float)
        return X, (y if self.maximize else -y)

    def candidate_pool(self, rng: np.random.Generator, incumbent: np.ndarray) -> np.ndarray:
        b = self.budget
        pool = [lhs_unit(b.candidates, self.space.dimension, rng)]
        if b.local_candidates:
            local = incumbent + rng.normal(0.0, b.local_scale, (b.local_candidates, self.space.dimension))
            pool.append(local)
        pool = self.space.snap(np.vstack(pool))
        keep = [i for i, row in enumerate(pool) if _row_key(row) not in self.seen]
        return pool[keep] if keep else pool


def model_based_run(
    target,
    space: ConfigurationSpace,
    budget: TunerBudget,
    surrogate: str,
    seeds: Sequence[Configuration] | None = None,
    history: RunHistory | None = None,
    session_id: str = "session",
    method_label: str | None = None,
    on_observation: Callable[[Observation], None] | None = None,
    interleave_every: int = 0,
    forest_trees: int = 10,
) -> RunHistory:
    if surrogate not in ("gp", "forest"):
        raise ValueError(f"unknown surrogate {surrogate!r}")
    seeds = _prepare_seeds(space, seeds, budget)
    if history is None:
        label = method_label or ("VBO" if surrogate == "gp" else "SMAC")
        history = RunHistory(session_id, target.objective_kind, label, space_digest=space.digest())
    rng = np.random.default_rng(budget.rng_seed)
    driver = _Driver(target, space, budget, history, on_observation)

    if not history.observations:
        driver.evaluate(space.default_configuration())
    init = list(seeds)
    if len(init) < budget.init_points:
        init += lhs_sample(space, budget.init_points - len(init), rng)
    done_init = max(0, history.next_iteration - 1)
    for config in init[done_init:]:
        driver.evaluate(config)
    if not history.successful():
        raise OptimizationAborted("every initial evaluation failed")

    theta = None
    suggestion = 0
    while history.next_iteration <= budget.max_iterations:
        suggestion += 1
        X, y = driver.data()
        incumbent = X[int(np.argmax(y))]
        if interleave_every and suggestion % interleave_every == 0:
            unit = space.snap(rng.random((1, space.dimension)))[0]
            driver.evaluate(denormalize(space, unit))
            continue
        pool = driver.candidate_pool(rng, incumbent)
        try:
            if surrogate == "gp":
                model = gp_fit(X, y, restarts=3, seed=rng, theta0=theta)
                theta = model.theta
                mean, var = gp_predict(model, pool)
            else:
                model = forest_fit(X, y, trees_count=forest_trees, seed=rng)
                mean, var = model.predict(pool)
            ei = expected_improvement(mean, var, float(y.max()), maximize=True)
            choice = pool[int(np.argmax(ei))]
        except (FitFailed, ValueError) as exc:
            log.warning("surrogate unavailable (%s); falling back to a random candidate", exc)
            choice = pool[int(rng.integers(len(pool)))]
        driver.evaluate(denormalize(space, choice))
    return history


def vbo_run(target, space, budget: TunerBudget, seeds=None, **kwargs) -> RunHistory:
    """Vanilla BO with a GP surrogate."""
    return model_based_run(target, space, budget, "gp", seeds, **kwargs)


def smac_run(target, space, budget: TunerBudget, seeds=None, **kwargs) -> RunHistory:
    """SMAC-style BO with a random forest surrogate; every 4th suggestion is random."""
    kwargs.setdefault("interleave_every", 4)
    return model_based_run(target, space, budget, "forest", seeds, **kwargs)
