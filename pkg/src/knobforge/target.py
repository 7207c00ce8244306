"""Tuning targets: the simulated DBMS and the external-command adapter.

Every target exposes ``space`` (the full knob catalog it understands),
``objective_kind`` and ``evaluate(config) -> Feedback``. Knobs missing from
``config`` are held at catalog defaults, so a target can be driven from a
pruned space.
"""

from __future__ import annotations

import json
import logging
import math
import re
import shlex
import subprocess
import tempfile
import time
from collections.abc import Mapping
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any

import numpy as np

from .knobspace import (
    BOOLEAN,
    ENUM,
    INTEGER,
    Configuration,
    ConfigurationSpace,
    complete_configuration,
    normalize,
)

log = logging.getLogger(__name__)

THROUGHPUT = "throughput_tps"
LATENCY = "latency_seconds"
OBJECTIVE_KINDS = (THROUGHPUT, LATENCY)

SHAPES = ("quadratic", "saturating", "step")
DEFAULT_EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)


class TargetError(RuntimeError):
    """Base class for evaluation failures; recorded as failed observations."""

    kind = "target_error"


class TargetUnavailable(TargetError):
    kind = "target_unavailable"


class EvaluationTimeout(TargetError):
    kind = "evaluation_timeout"


class EvaluationFailed(TargetError):
    kind = "evaluation_failed"


def is_maximize(objective_kind: str) -> bool:
    if objective_kind not in OBJECTIVE_KINDS:
        raise ValueError(f"unknown objective kind {objective_kind!r}")
    return objective_kind == THROUGHPUT


@dataclass(frozen=True)
class Feedback:
    objective_kind: str
    objective: float
    internal_metrics: Mapping[str, float] = field(default_factory=dict)
    eval_duration_seconds: float = 0.0

    def __post_init__(self) -> None:
        if self.objective_kind not in OBJECTIVE_KINDS:
            raise ValueError(f"unknown objective kind {self.objective_kind!r}")
        if not (math.isfinite(self.objective) and self.objective > 0):
            raise ValueError(f"objective must be finite and positive, got {self.objective}")
        if self.eval_duration_seconds < 0:
            raise ValueError("eval_duration_seconds must be >= 0")
        metrics = {str(k): float(v) for k, v in self.internal_metrics.items()}
        bad = [k for k, v in metrics.items() if not math.isfinite(v)]
        if bad:
            raise ValueError(f"non-finite internal metrics: {bad}")
        object.__setattr__(self, "internal_metrics", metrics)


@dataclass(frozen=True)
class Observation:
    """One evaluated configuration. ``feedback`` is None for failed trials."""

    iteration: int
    config: Configuration
    feedback: Feedback | None
    timestamp: str
    status: str = "ok"
    error: str | None = None
    coercions: tuple = ()

    @property
    def ok(self) -> bool:
        return self.status == "ok" and self.feedback is not None

    @property
    def objective(self) -> float | None:
        return self.feedback.objective if self.feedback is not None else None


def run_trial(target, config: Configuration, iteration: int, coercions=()) -> Observation:
    """Evaluate ``config`` and wrap the outcome, turning target errors into failed observations."""
    try:
        feedback = target.evaluate(config)
    except TargetError as exc:
        log.warning("iteration %d failed: %s", iteration, exc)
        return Observation(iteration, config, None, target.timestamp(), "failed", f"{exc.kind}: {exc}", tuple(coercions))
    return Observation(iteration, config, feedback, target.timestamp(), "ok", None, tuple(coercions))


# ---------------------------------------------------------------- simulator


@dataclass(frozen=True)
class ImportantKnob:
    name: str
    weight: float
    optimum: float
    shape: str = "quadratic"


@dataclass(frozen=True)
class SynthSurfaceSpec:
    """Planted response surface over normalized knob coordinates."""

    important_knobs: tuple[ImportantKnob, ...]
    base_objective: float = 10.0
    interaction_pairs: tuple[tuple[str, str, float], ...] = ()
    noise_sd: float = 0.0
    seed: int = 0
    objective_kind: str = THROUGHPUT
    latency_scale: float = 1000.0
    eval_duration_seconds: float = 120.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "important_knobs", tuple(self.important_knobs))
        object.__setattr__(self, "interaction_pairs", tuple(tuple(p) for p in self.interaction_pairs))
        if not self.important_knobs:
            raise ValueError("surface needs at least one important knob")
        for k in self.important_knobs:
            if k.weight < 0:
                raise ValueError(f"{k.name}: negative weight")
            if not 0.0 <= k.optimum <= 1.0:
                raise ValueError(f"{k.name}: optimum must lie in [0, 1]")
            if k.shape not in SHAPES:
                raise ValueError(f"{k.name}: unknown shape {k.shape!r}")
        if sum(k.weight for k in self.important_knobs) <= 0:
            raise ValueError("important knob weights must sum to a positive value")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if self.base_objective <= 0:
            raise ValueError("base_objective must be positive")
        if self.objective_kind not in OBJECTIVE_KINDS:
            raise ValueError(f"unknown objective kind {self.objective_kind!r}")

    @property
    def names(self) -> list[str]:
        return [k.name for k in self.important_knobs]

    def to_json(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "base_objective": self.base_objective,
            "noise_sd": self.noise_sd,
            "objective_kind": self.objective_kind,
            "latency_scale": self.latency_scale,
            "eval_duration_seconds": self.eval_duration_seconds,
            "important_knobs": [
                {"name": k.name, "weight": k.weight, "optimum": k.optimum, "shape": k.shape}
                for k in self.important_knobs
            ],
            "interaction_pairs": [list(p) for p in self.interaction_pairs],
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> SynthSurfaceSpec:
        return cls(
            important_knobs=tuple(ImportantKnob(**k) for k in data["important_knobs"]),
            base_objective=float(data.get("base_objective", 10.0)),
            interaction_pairs=tuple((a, b, float(w)) for a, b, w in data.get("interaction_pairs", [])),
            noise_sd=float(data.get("noise_sd", 0.0)),
            seed=int(data.get("seed", 0)),
            objective_kind=data.get("objective_kind", THROUGHPUT),
            latency_scale=float(data.get("latency_scale", 1000.0)),
            eval_duration_seconds=float(data.get("eval_duration_seconds", 120.0)),
        )


def shape_value(shape: str, x: float, optimum: float) -> float:
    if shape == "quadratic":
        return max(0.0, 1.0 - 4.0 * (x - optimum) ** 2)
    if shape == "saturating":
        return 1.0 if optimum <= 0 else min(1.0, x / optimum)
    if shape == "step":
        return 1.0 if x >= optimum else 0.0
    raise ValueError(f"unknown shape {shape!r}")


def _coords(space: ConfigurationSpace, config: Mapping[str, Any]) -> dict[str, float]:
    vec = normalize(space, config)
    return dict(zip(space.names, vec.tolist()))


def synth_score(spec: SynthSurfaceSpec, space: ConfigurationSpace, config: Mapping[str, Any], rng=None) -> float:
    """Noise-aware score (higher is better) of a complete configuration."""
    x = _coords(space, config)
    score = spec.base_objective
    for k in spec.important_knobs:
        score += k.weight * shape_value(k.shape, x[k.name], k.optimum)
    for a, b, w in spec.interaction_pairs:
        score += w * x[a] * x[b]
    if spec.noise_sd > 0:
        if rng is None:
            raise ValueError("a noisy surface needs an rng")
        score += rng.normal(0.0, spec.noise_sd)
    return score


def synth_objective(spec: SynthSurfaceSpec, space: ConfigurationSpace, config: Mapping[str, Any], rng=None) -> float:
    """Objective reported by the simulator: the score as TPS, or ``latency_scale / score`` as latency."""
    score = max(synth_score(spec, space, config, rng), 1e-9)
    if spec.objective_kind == LATENCY:
        return spec.latency_scale / score
    return score


def synth_internal_metrics(spec: SynthSurfaceSpec, space: ConfigurationSpace, config: Mapping[str, Any], objective: float) -> dict[str, float]:
    x = _coords(space, config)
    metrics = {f"{k.name}_pressure": 1.0 - shape_value(k.shape, x[k.name], k.optimum) for k in spec.important_knobs}
    metrics["objective_echo"] = float(objective)
    return metrics


def planted_optimum(spec: SynthSurfaceSpec, space: ConfigurationSpace) -> Configuration:
    """Best legal configuration for the planted knobs, every other knob at default.

    This is the exact argmax when the surface has no interaction terms.
    """
    values = dict(space.default_configuration())
    for k in spec.important_knobs:
        knob = space[k.name]
        best, best_shape = None, -1.0
        for value in _legal_neighbours(knob, k.optimum):
            x = normalize(space.subspace([k.name]), {k.name: value})[0]
            s = shape_value(k.shape, x, k.optimum)
            if s > best_shape:
                best, best_shape = value, s
        values[k.name] = best
    return Configuration(values)


def _legal_neighbours(knob, position: float) -> list:
    if knob.ktype == INTEGER:
        raw = knob.min + position * (knob.max - knob.min)
        lo, hi = math.floor(raw), math.ceil(raw)
        return sorted({min(max(v, knob.min), knob.max) for v in (lo, hi)})
    if knob.ktype == ENUM:
        return list(knob.choices)
    if knob.ktype == BOOLEAN:
        return [False, True]
    return [knob.min + position * (knob.max - knob.min)]


class SimulatedTarget:
    """Deterministic stand-in for a DBMS under a fixed workload.

    Stress tests are instantaneous; timestamps advance on a simulated clock by
    ``eval_duration_seconds`` per evaluation, so histories are reproducible.
    """

    def __init__(self, space: ConfigurationSpace, spec: SynthSurfaceSpec, epoch: datetime = DEFAULT_EPOCH) -> None:
        missing = [n for n in spec.names if n not in space]
        missing += [n for a, b, _ in spec.interaction_pairs for n in (a, b) if n not in space]
        if missing:
            raise ValueError(f"surface references knobs missing from the catalog: {sorted(set(missing))}")
        self.space = space
        self.spec = spec
        self.objective_kind = spec.objective_kind
        self._rng = np.random.default_rng(spec.seed)
        self._clock = epoch
        self.evaluations = 0

    def evaluate(self, config: Mapping[str, Any]) -> Feedback:
        full = complete_configuration(self.space, config)
        rng = self._rng if self.spec.noise_sd > 0 else None
        objective = synth_objective(self.spec, self.space, full, rng)
        metrics = synth_internal_metrics(self.spec, self.space, full, objective)
        self.evaluations += 1
        self._clock += timedelta(seconds=self.spec.eval_duration_seconds)
        return Feedback(self.objective_kind, objective, metrics, self.spec.eval_duration_seconds)

    def timestamp(self) -> str:
        return self._clock.isoformat()

    def optimum(self) -> tuple[Configuration, float]:
        config = planted_optimum(self.spec, self.space)
        return config, synth_objective(self.spec, self.space, config)


# ---------------------------------------------------------------- external


@dataclass
class ExternalHooks:
    """Shell command templates driving a real engine.

    ``apply`` may reference ``{config_file}`` (a ``name = value`` fragment is
    written there) or ``{knob_name}``/``{knob_value}`` (run once per knob).
    ``benchmark`` stdout is searched with ``objective_pattern``; its first
    capture group is the objective. ``metrics`` stdout is a JSON object or
    ``name value`` lines.
    """

    apply: str | None = None
    restart: str | None = None
    benchmark: str = ""
    metrics: str | None = None
    objective_pattern: str = r"tps: (\d+\.\d+)"
    timeout_seconds: float = 600.0


class ExternalTarget:
    def __init__(self, space: ConfigurationSpace, hooks: ExternalHooks, objective_kind: str = THROUGHPUT, workdir: str | Path | None = None) -> None:
        if not hooks.benchmark:
            raise ValueError("external target needs a benchmark hook")
        is_maximize(objective_kind)
        self.space = space
        self.hooks = hooks
        self.objective_kind = objective_kind
        self.workdir = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="knobforge-"))
        self._pattern = re.compile(hooks.objective_pattern)

    def _run(self, command: str, stage: str) -> str:
        try:
            proc = subprocess.run(command, shell=True, capture_output=True, text=True, timeout=self.hooks.timeout_seconds)
        except subprocess.TimeoutExpired as exc:
            raise EvaluationTimeout(f"{stage} hook timed out after {self.hooks.timeout_seconds}s") from exc
        if proc.returncode != 0:
            raise TargetUnavailable(f"{stage} hook exited with {proc.returncode}: {proc.stderr.strip()[:200]}")
        return proc.stdout

    def _apply(self, config: Configuration) -> None:
        template = self.hooks.apply
        if not template:
            return
        if "{knob_name}" in template or "{knob_value}" in template:
            for name, value in config.items():
                cmd = template.replace("{knob_name}", shlex.quote(name)).replace("{knob_value}", shlex.quote(_render_value(value)))
                self._run(cmd, "apply")
            return
        path = self.workdir / "knobforge.cnf"
        path.write_text("".join(f"{n} = {_render_value(v)}\n" for n, v in config.items()), encoding="utf-8")
        self._run(template.replace("{config_file}", shlex.quote(str(path))), "apply")

    def evaluate(self, config: Mapping[str, Any]) -> Feedback:
        full = complete_configuration(self.space, config)
        started = time.monotonic()
        self._apply(full)
        if self.hooks.restart:
            self._run(self.hooks.restart, "restart")
        out = self._run(self.hooks.benchmark, "benchmark")
        match = self._pattern.search(out)
        if match is None:
            raise EvaluationFailed("benchmark output did not match the objective pattern")
        try:
            objective = float(match.group(1))
        except (IndexError, ValueError) as exc:
            raise EvaluationFailed(f"unparseable objective {match.group(0)!r}") from exc
        metrics = {}
        if self.hooks.metrics:
            metrics = parse_metrics_output(self._run(self.hooks.metrics, "metrics"))
        try:
            return Feedback(self.objective_kind, objective, metrics, time.monotonic() - started)
        except ValueError as exc:
            raise EvaluationFailed(str(exc)) from exc

    def timestamp(self) -> str:
        return datetime.now(timezone.utc).isoformat()


def _render_value(value: Any) -> str:
    if isinstance(value, bool):
        return "ON" if value else "OFF"
    return str(value)


def parse_metrics_output(text: str) -> dict[str, float]:
    text = text.strip()
    if not text:
        return {}
    if text.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise EvaluationFailed(f"metrics hook printed invalid JSON: {exc}") from exc
        return {str(k): float(v) for k, v in data.items() if isinstance(v, (int, float)) and not isinstance(v, bool)}
    metrics = {}
    for line in text.splitlines():
        parts = re.split(r"[:=\s]+", line.strip(), maxsplit=1)
        if len(parts) == 2:
            try:
                metrics[parts[0]] = float(parts[1])
            except ValueError:
                continue
    return metrics
