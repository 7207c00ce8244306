"""Data-driven knob importance (sampled Shapley values over a forest surrogate) and ranking diffs."""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .knobspace import ENUM, INTEGER, ConfigurationSpace, PrunedSpace, normalize
from .optimize.forest import forest_fit
from .optimize.lhs import lhs_sample
from .target import Observation, is_maximize, run_trial

log = logging.getLogger(__name__)

SHAPLEY_SURROGATE = "shapley_surrogate"
LLM = "llm"


class InsufficientData(ValueError):
    pass


class InvalidK(ValueError):
    pass


@dataclass
class ObservationSet:
    observations: list[Observation]
    failed: int = 0


def collect_observations(target, space: ConfigurationSpace, n: int, seed: int = 0) -> ObservationSet:
    """Evaluate ``n`` LHS configurations; failed trials are dropped and counted."""
    if n < 2:
        raise InsufficientData("n must be >= 2")
    ok: list[Observation] = []
    failed = 0
    for i, config in enumerate(lhs_sample(space, n, seed), start=1):
        obs = run_trial(target, config, i)
        if obs.ok:
            ok.append(obs)
        else:
            failed += 1
    if failed:
        log.warning("%d of %d sampled configurations failed to evaluate", failed, n)
    if len(ok) < 2:
        raise InsufficientData(f"only {len(ok)} successful observations")
    return ObservationSet(ok, failed)


@dataclass(frozen=True)
class ImportanceRanking:
    entries: tuple[tuple[str, float], ...]
    method: str = SHAPLEY_SURROGATE
    label: str = ""

    def __post_init__(self) -> None:
        entries = tuple((str(n), float(v)) for n, v in self.entries)
        if any(v < 0 for _, v in entries):
            raise ValueError("importance values must be non-negative")
        if any(entries[i][1] < entries[i + 1][1] for i in range(len(entries) - 1)):
            raise ValueError("entries must be sorted by importance, descending")
        names = [n for n, _ in entries]
        if len(set(names)) != len(names):
            raise ValueError("duplicate knob in ranking")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "label", self.label or self.method)

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.entries]

    def top(self, k: int) -> list[str]:
        if not 1 <= k <= len(self.entries):
            raise InvalidK(f"k={k} outside [1, {len(self.entries)}]")
        return self.names[:k]

    @classmethod
    def from_names(cls, names: Sequence[str], method: str = LLM, label: str = "") -> ImportanceRanking:
        """Ranking from an ordered selection; importances are rank-based placeholders."""
        n = len(names)
        return cls(tuple((name, float(n - i)) for i, name in enumerate(names)), method, label)

    def to_json(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "method": self.method,
            "entries": [{"knob": n, "importance": v} for n, v in self.entries],
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> ImportanceRanking:
        entries = tuple((e["knob"], e["importance"]) for e in data["entries"])
        return cls(entries, data.get("method", SHAPLEY_SURROGATE), data.get("label", ""))


def _canonical(observations: Sequence[Observation], space: ConfigurationSpace) -> tuple[np.ndarray, np.ndarray]:
    rows = [(tuple(normalize(space, o.config).tolist()), float(o.objective)) for o in observations if o.ok]
    rows.sort()
    X = np.array([r for r, _ in rows], dtype=float)
    y = np.array([v for _, v in rows], dtype=float)
    return X, y


def shapley_importance(
    observations: Sequence[Observation],
    space: ConfigurationSpace,
    permutations_count: int = 500,
    seed: int = 0,
    trees_count: int = 10,
) -> ImportanceRanking:
    """Sampled-permutation Shapley importance of every knob on a forest surrogate.

    For each sampled permutation a random observation supplies coalition
    values and knobs outside the coalition sit at their defaults; a knob's
    importance is its mean absolute marginal contribution. Observations are
    put in a canonical order first, so their input order does not matter.
    """
    X, y = _canonical(observations, space)
    d = space.dimension
    if len(X) < 2 * d:
        raise InsufficientData(f"need at least {2 * d} successful observations, got {len(X)}")
    if permutations_count < 1:
        raise ValueError("permutations_count must be >= 1")
    rng = np.random.default_rng(seed)
    model = forest_fit(X, y, trees_count=trees_count, seed=rng)
    baseline = normalize(space, space.default_configuration())

    perms = np.array([rng.permutation(d) for _ in range(permutations_count)])
    donors = X[rng.integers(len(X), size=permutations_count)]
    # path[p, j] is the point after the first j knobs of permutation p joined the coalition
    paths = np.repeat(baseline[None, None, :], d + 1, axis=1).repeat(permutations_count, axis=0)
    for j in range(d):
        paths[:, j + 1] = paths[:, j]
        cols = perms[:, j]
        paths[np.arange(permutations_count), j + 1, cols] = donors[np.arange(permutations_count), cols]
    values = model.predict(paths.reshape(-1, d))[0].reshape(permutations_count, d + 1)
    marginal = np.abs(np.diff(values, axis=1))
    phi = np.zeros(d)
    np.add.at(phi, perms.ravel(), marginal.ravel())
    phi /= permutations_count

    order = sorted(range(d), key=lambda i: (-phi[i], i))
    return ImportanceRanking(tuple((space.names[i], float(phi[i])) for i in order), SHAPLEY_SURROGATE)


def data_driven_pruned_space(
    ranking: ImportanceRanking,
    observations: Sequence[Observation],
    space: ConfigurationSpace,
    k: int,
) -> PrunedSpace:
    """Keep the top-``k`` knobs, narrowed to the [10th, 90th] percentile of their values among the top decile.

    Ranges that would collapse to a point stay at the catalog range.
    """
    selected = ranking.top(k)
    ok = [o for o in observations if o.ok]
    if not ok:
        raise InsufficientData("no successful observations")
    maximize = is_maximize(ok[0].feedback.objective_kind)
    ranked = sorted(ok, key=lambda o: -o.objective if maximize else o.objective)
    top = ranked[: max(1, int(np.ceil(len(ranked) / 10)))]
    ranges: dict[str, Any] = {}
    for name in selected:
        knob = space[name]
        if knob.is_numeric:
            values = np.array([o.config[name] for o in top], dtype=float)
            lo, hi = np.percentile(values, [10, 90])
            if knob.ktype == INTEGER:
                lo, hi = int(np.floor(lo)), int(np.ceil(hi))
            lo, hi = max(lo, knob.min), min(hi, knob.max)
            if lo < hi and (lo, hi) != (knob.min, knob.max):
                ranges[name] = (lo, hi)
        elif knob.ktype == ENUM:
            seen = {o.config[name] for o in top}
            kept = tuple(c for c in knob.choices if c in seen)
            if kept and kept != knob.choices:
                ranges[name] = kept
    return PrunedSpace(space, tuple(selected), ranges)


@dataclass
class PruningRow:
    label: str
    method: str
    top_k: list[str]
    overlap: int
    only_in_ranking: list[str]
    only_in_reference: list[str]


@dataclass
class PruningReport:
    k: int
    reference_label: str
    reference_top_k: list[str]
    rows: list[PruningRow] = field(default_factory=list)

    def to_json(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "reference": {"label": self.reference_label, "top_k": self.reference_top_k},
            "rows": [
                {
                    "label": r.label,
                    "method": r.method,
                    "top_k": r.top_k,
                    "overlap": r.overlap,
                    "only_in_ranking": r.only_in_ranking,
                    "only_in_reference": r.only_in_reference,
                }
                for r in self.rows
            ],
        }

    def to_text(self) -> str:
        labels = [self.reference_label] + [r.label for r in self.rows]
        columns = [self.reference_top_k] + [r.top_k for r in self.rows]
        marks = [set()] + [set(r.only_in_ranking) for r in self.rows]
        cells = [[(f"*{n}" if n in m else n) for n in col] for col, m in zip(columns, marks)]
        widths = [max(len(lbl), *(len(c) for c in col)) for lbl, col in zip(labels, cells)]
        lines = ["  ".join(lbl.ljust(w) for lbl, w in zip(labels, widths)).rstrip()]
        lines.append("  ".join("-" * w for w in widths))
        for i in range(self.k):
            lines.append("  ".join(col[i].ljust(w) for col, w in zip(cells, widths)).rstrip())
        if self.rows:
            lines.append("")
            for r in self.rows:
                lines.append(f"{r.label}: overlap {r.overlap}/{self.k} with {self.reference_label}")
            lines.append("* not selected by the reference")
        return "\n".join(lines) + "\n"


def pruning_report(rankings: Sequence[ImportanceRanking], reference: ImportanceRanking, k: int) -> PruningReport:
    """Top-k overlap and symmetric difference of each ranking against the reference."""
    ref = reference.top(k)
    report = PruningReport(k, reference.label, ref)
    for ranking in rankings:
        top = ranking.top(k)
        report.rows.append(
            PruningRow(
                label=ranking.label,
                method=ranking.method,
                top_k=top,
                overlap=len(set(top) & set(ref)),
                only_in_ranking=[n for n in top if n not in ref],
                only_in_reference=[n for n in ref if n not in top],
            )
        )
    return report
