"""Workload-mapping initialization: reuse the best observations of the most similar past session."""

from __future__ import annotations

import dataclasses
from collections.abc import Mapping, Sequence

import numpy as np

from ..knobspace import CLAMP_ROUND, ConfigurationSpace, coerce_configuration
from ..metrics import RunHistory
from ..target import Feedback, Observation


class NoHistory(LookupError):
    pass


def _default_metrics(history: RunHistory) -> dict[str, float] | None:
    for obs in history.observations:
        if obs.iteration == 0:
            return dict(obs.feedback.internal_metrics) if obs.ok else None
    return None


def workload_distances(history_store: Sequence[RunHistory], target_metrics: Feedback | Mapping[str, float]) -> list[float]:
    """Euclidean distance from the target to each stored session over z-scored shared metrics.

    Metrics are z-scored with statistics over the stored sessions and the
    target together; a metric with zero spread is left unscaled. Sessions
    without a usable default evaluation get an infinite distance.
    """
    target = dict(target_metrics.internal_metrics if isinstance(target_metrics, Feedback) else target_metrics)
    profiles = [_default_metrics(h) for h in history_store]
    usable = [p for p in profiles if p is not None]
    shared = sorted(set(target).intersection(*[set(p) for p in usable])) if usable else []
    if not shared:
        raise NoHistory("no stored session shares internal metrics with the target workload")
    table = np.array([[p[m] for m in shared] for p in usable] + [[target[m] for m in shared]])
    mean = table.mean(axis=0)
    std = table.std(axis=0)
    std[std == 0] = 1.0
    z_target = (np.array([target[m] for m in shared]) - mean) / std
    out = []
    for p in profiles:
        if p is None:
            out.append(float("inf"))
            continue
        z = (np.array([p[m] for m in shared]) - mean) / std
        out.append(float(np.linalg.norm(z - z_target)))
    return out


def workload_mapping_init(
    history_store: Sequence[RunHistory],
    target_metrics: Feedback | Mapping[str, float],
    top_n: int,
    space: ConfigurationSpace,
) -> list[Observation]:
    """Best ``top_n`` observations of the nearest stored session, coerced into ``space``.

    Ties in distance go to the earlier session. Knobs absent from the stored
    configuration take the space defaults; out-of-range values are clamped.
    """
    if not history_store:
        raise NoHistory("history store is empty")
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    distances = workload_distances(history_store, target_metrics)
    nearest = history_store[int(np.argmin(distances))]
    ranked = sorted(nearest.successful(), key=lambda o: -o.objective if nearest.maximize else o.objective)
    out = []
    for obs in ranked[:top_n]:
        checked = coerce_configuration(space, obs.config, CLAMP_ROUND)
        if not checked.ok:
            continue
        out.append(dataclasses.replace(obs, config=checked.config, coercions=tuple(checked.log)))
    return out
