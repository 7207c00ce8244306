"""Run histories, their JSON Lines persistence, and tuning metrics.

Iteration convention: the default configuration is iteration 0, the first
suggested configuration is iteration 1. TES counts from 1. Failed
observations keep their index but never contribute to IR, ODP or TES.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .knobspace import Coercion, Configuration, ConfigurationSpace, coerce_configuration
from .target import LATENCY, OBJECTIVE_KINDS, Feedback, Observation, is_maximize


class MetricsError(ValueError):
    pass


class EmptyHistory(MetricsError):
    pass


class MissingFirstRefinement(MetricsError):
    pass


class MixedObjectiveKinds(MetricsError):
    pass


class HistoryFormatError(ValueError):
    def __init__(self, path, line: int, message: str) -> None:
        super().__init__(f"{path}:{line}: {message}")
        self.line = line


@dataclass
class RunHistory:
    session_id: str
    objective_kind: str
    method_label: str
    observations: list[Observation] = field(default_factory=list)
    space_digest: str = ""

    def __post_init__(self) -> None:
        if self.objective_kind not in OBJECTIVE_KINDS:
            raise ValueError(f"unknown objective kind {self.objective_kind!r}")

    @property
    def maximize(self) -> bool:
        return is_maximize(self.objective_kind)

    def __len__(self) -> int:
        return len(self.observations)

    def append(self, obs: Observation) -> None:
        if self.observations and obs.iteration <= self.observations[-1].iteration:
            raise ValueError("iterations must be strictly increasing")
        if obs.feedback is not None and obs.feedback.objective_kind != self.objective_kind:
            raise MixedObjectiveKinds(f"{obs.feedback.objective_kind} observation in a {self.objective_kind} history")
        self.observations.append(obs)

    @property
    def next_iteration(self) -> int:
        return self.observations[-1].iteration + 1 if self.observations else 0

    def successful(self) -> list[Observation]:
        return [o for o in self.observations if o.ok]

    def better(self, a: float, b: float) -> bool:
        return a > b if self.maximize else a < b

    def best(self) -> Observation | None:
        best = None
        for obs in self.successful():
            if best is None or self.better(obs.objective, best.objective):
                best = obs
        return best

    def best_so_far(self) -> list[float]:
        """Incumbent objective after each successful observation."""
        curve: list[float] = []
        for obs in self.successful():
            if not curve or self.better(obs.objective, curve[-1]):
                curve.append(obs.objective)
            else:
                curve.append(curve[-1])
        return curve


# ---------------------------------------------------------------- metrics


def compute_odp(history: RunHistory) -> float:
    """Best objective over all successful observations, default included."""
    best = history.best()
    if best is None:
        raise EmptyHistory("no successful observations")
    return best.objective


def compute_tes(history: RunHistory) -> int:
    """First non-default iteration attaining the run's peak.

    When the default configuration strictly beats every suggestion, the peak
    over suggestions is used instead so TES stays >= 1.
    """
    suggestions = [o for o in history.successful() if o.iteration >= 1]
    if not suggestions:
        raise EmptyHistory("no successful non-default observations")
    target = compute_odp(history)
    for obs in suggestions:
        if obs.objective == target:
            return obs.iteration
    peak = suggestions[0].objective
    for obs in suggestions:
        if history.better(obs.objective, peak):
            peak = obs.objective
    return next(o.iteration for o in suggestions if o.objective == peak)


def compute_ir(history: RunHistory) -> float:
    for obs in history.observations:
        if obs.iteration == 1:
            if not obs.ok:
                break
            return obs.objective
    raise MissingFirstRefinement("iteration 1 is missing or failed")


def compute_pe(odp_orig: float, odp_init: float, maximize: bool = True) -> float:
    """Relative ODP change of an initialized run against its base run.

    Positive means the initialized run found a better configuration; for
    latency objectives the sign is flipped accordingly.
    """
    if not odp_orig > 0:
        raise MetricsError("odp_orig must be positive")
    if maximize:
        return (odp_init - odp_orig) / odp_orig
    return (odp_orig - odp_init) / odp_orig


def compute_speedup(tes_orig: int, tes_init: int) -> float:
    if tes_orig < 1:
        raise MetricsError("tes_orig must be >= 1")
    return (tes_orig - tes_init) / tes_orig


@dataclass
class MetricsReport:
    method_label: str
    objective_kind: str
    odp: float
    tes: int | None
    ir: float | None = None
    pe: float | None = None
    speedup: float | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "method_label": self.method_label,
            "objective_kind": self.objective_kind,
            "ir": self.ir,
            "odp": self.odp,
            "tes": self.tes,
            "pe": self.pe,
            "speedup": self.speedup,
        }


def run_report(history: RunHistory) -> MetricsReport:
    odp = compute_odp(history)
    try:
        tes = compute_tes(history)
    except EmptyHistory:
        tes = None
    try:
        ir = compute_ir(history)
    except MissingFirstRefinement:
        ir = None
    return MetricsReport(history.method_label, history.objective_kind, odp, tes, ir)


@dataclass
class ComparisonReport:
    objective_kind: str
    rows: list[MetricsReport]
    base_label: str | None = None

    @property
    def odp_label(self) -> str:
        return "ODP_AP" if self.objective_kind == LATENCY else "ODP"

    def to_json(self) -> dict[str, Any]:
        return {
            "objective_kind": self.objective_kind,
            "odp_label": self.odp_label,
            "base": self.base_label,
            "rows": [r.to_json() for r in self.rows],
        }

    def to_text(self) -> str:
        paired = self.base_label is not None
        header = ["Method", "IR", self.odp_label, "TES"] + (["PE", "Speedup"] if paired else [])
        table = [header]
        for r in self.rows:
            line = [r.method_label, _fmt(r.ir), _fmt(r.odp), "-" if r.tes is None else str(r.tes)]
            if paired:
                line += [_pct(r.pe), _pct(r.speedup)]
            table.append(line)
        widths = [max(len(row[i]) for row in table) for i in range(len(header))]
        lines = ["  ".join(cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(row, widths))) for row in table]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.2f}"


def _pct(value: float | None) -> str:
    return "-" if value is None else f"{value * 100:.2f}%"


def comparison_report(histories: Sequence[RunHistory], base: int | str | None = None) -> ComparisonReport:
    """Tabulate IR/ODP/TES per history, plus PE and Speedup against ``base``.

    ``base`` is the index or method label of the base run; pairing is never
    inferred.
    """
    if not histories:
        raise MetricsError("need at least one history")
    kinds = {h.objective_kind for h in histories}
    if len(kinds) > 1:
        raise MixedObjectiveKinds(f"mixed objective kinds: {sorted(kinds)}")
    kind = kinds.pop()
    rows = [run_report(h) for h in histories]
    base_label = None
    if base is not None:
        if isinstance(base, str):
            matches = [i for i, h in enumerate(histories) if h.method_label == base]
            if not matches:
                raise MetricsError(f"no history labelled {base!r}")
            base = matches[0]
        ref = rows[base]
        base_label = ref.method_label
        maximize = is_maximize(kind)
        for row in rows:
            row.pe = compute_pe(ref.odp, row.odp, maximize)
            if ref.tes is not None and row.tes is not None:
                row.speedup = compute_speedup(ref.tes, row.tes)
    return ComparisonReport(kind, rows, base_label)


# ---------------------------------------------------------------- JSON Lines


def _dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, allow_nan=False)


def header_record(history: RunHistory) -> dict[str, Any]:
    return {
        "session_id": history.session_id,
        "method_label": history.method_label,
        "space_digest": history.space_digest,
        "objective_kind": history.objective_kind,
    }


def observation_record(obs: Observation, objective_kind: str) -> dict[str, Any]:
    record = {
        "iteration": obs.iteration,
        "config": obs.config.to_json(),
        "objective_kind": objective_kind,
        "objective": obs.objective,
        "internal_metrics": dict(obs.feedback.internal_metrics) if obs.feedback else {},
        "eval_duration_seconds": obs.feedback.eval_duration_seconds if obs.feedback else None,
        "status": obs.status,
        "timestamp": obs.timestamp,
    }
    if obs.error:
        record["error"] = obs.error
    if obs.coercions:
        record["coercions"] = [
            {"knob": c.knob, "original": c.original, "coerced": c.coerced, "reason": c.reason} for c in obs.coercions
        ]
    return record


class HistoryWriter:
    """Append-only JSONL sink; each observation is flushed as it arrives."""

    def __init__(self, path: str | Path, history: RunHistory, resume: bool = False) -> None:
        self.path = Path(path)
        self.objective_kind = history.objective_kind
        mode = "a" if resume else "w"
        self._fh = open(self.path, mode, encoding="utf-8", newline="\n")
        if not resume:
            self._fh.write(_dumps(header_record(history)) + "\n")
            for obs in history.observations:
                self.write(obs)
            self._fh.flush()

    def write(self, obs: Observation) -> None:
        self._fh.write(_dumps(observation_record(obs, self.objective_kind)) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> HistoryWriter:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_jsonl(history: RunHistory, path: str | Path) -> None:
    with HistoryWriter(path, history):
        pass


def read_jsonl(path: str | Path, space: ConfigurationSpace | None = None) -> RunHistory:
    """Load a history; with ``space`` given, configurations are re-validated (clamp_round)."""
    path = Path(path)
    history: RunHistory | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise HistoryFormatError(path, lineno, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise HistoryFormatError(path, lineno, "expected a JSON object")
            try:
                if history is None:
                    history = RunHistory(
                        session_id=record["session_id"],
                        objective_kind=record.get("objective_kind", "throughput_tps"),
                        method_label=record["method_label"],
                        space_digest=record.get("space_digest", ""),
                    )
                    continue
                history.append(_parse_observation(record, history.objective_kind, space))
            except (KeyError, TypeError, ValueError) as exc:
                raise HistoryFormatError(path, lineno, f"malformed record: {exc}") from exc
    if history is None:
        raise HistoryFormatError(path, 1, "missing header line")
    return history


def _parse_observation(record: dict[str, Any], objective_kind: str, space: ConfigurationSpace | None) -> Observation:
    kind = record.get("objective_kind", objective_kind)
    if kind != objective_kind:
        raise MixedObjectiveKinds(f"{kind} observation in a {objective_kind} history")
    raw = record["config"]
    if space is not None:
        checked = coerce_configuration(space, raw)
        if checked.config is None:
            raise ValueError(f"configuration violates the space: {checked.violations}")
        config = checked.config
    else:
        config = Configuration(raw)
    status = record.get("status", "ok")
    feedback = None
    if status == "ok":
        objective = record["objective"]
        if objective is None or not math.isfinite(objective):
            raise ValueError("successful observation without objective")
        feedback = Feedback(kind, float(objective), record.get("internal_metrics") or {}, float(record.get("eval_duration_seconds") or 0.0))
    coercions = tuple(
        Coercion(c["knob"], c["original"], c["coerced"], c["reason"]) for c in record.get("coercions") or ()
    )
    return Observation(
        int(record["iteration"]), config, feedback, record.get("timestamp", ""), status, record.get("error"), coercions
    )


def load_histories(paths: Iterable[str | Path]) -> list[RunHistory]:
    return [read_jsonl(p) for p in paths]
