"""Deterministic stand-ins for a chat model, for hermetic runs and tests.

Policies:

``echo``
    Returns the Current Configuration unchanged (pruning: the first k candidates).
``scripted``
    Returns the given replies in order and raises once they run out.
``malformed``
    Prose without any JSON.
``hill_climb``
    Knows the simulator's planted surface. For recommendation prompts it
    reads Current Configuration and Database Feedback, and moves every
    planted knob whose ``<knob>_pressure`` exceeds ``threshold`` part of the
    way toward its optimum: half way under greedy decoding; under sampling
    a fraction drawn uniformly from ``sample_fraction`` and capped at 1, so
    with the default range about half the sampled replies name the optimum
    outright. For pruning prompts it returns the planted knobs, heaviest
    first, padded with other candidates.
"""

from __future__ import annotations

import json
import re
from collections.abc import Sequence

import numpy as np

from ..knobspace import BOOLEAN, ENUM, INTEGER, ConfigurationSpace, round_half_away
from ..target import SimulatedTarget, SynthSurfaceSpec
from .client import ChatRequest, LLMError
from .prompts import split_sections

POLICIES = ("echo", "scripted", "malformed", "hill_climb")
MALFORMED_REPLY = "Raising the buffer pool size and relaxing log flushing should help this workload."

_CANDIDATE_RE = re.compile(r"^- (\S+) \(", re.MULTILINE)
_K_RE = re.compile(r"Select exactly (\d+) knobs")


class MockExhausted(LLMError):
    pass


class MockLLM:
    def __init__(
        self,
        policy: str,
        replies: Sequence[str] = (),
        surface: SynthSurfaceSpec | None = None,
        catalog: ConfigurationSpace | None = None,
        threshold: float = 1e-3,
        sample_fraction: tuple[float, float] = (0.5, 1.5),
        seed: int = 0,
        model: str = "mock-llm",
    ) -> None:
        if policy not in POLICIES:
            raise ValueError(f"unknown mock policy {policy!r}")
        if policy == "hill_climb" and (surface is None or catalog is None):
            raise ValueError("hill_climb needs the planted surface and the full catalog")
        self.policy = policy
        self.model = model
        self.replies = list(replies)
        self.surface = surface
        self.catalog = catalog
        self.threshold = threshold
        self.sample_fraction = sample_fraction
        self._rng = np.random.default_rng(seed)
        self.calls: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> str:
        self.calls.append(request)
        if self.policy == "scripted":
            if len(self.calls) > len(self.replies):
                raise MockExhausted(f"scripted mock has only {len(self.replies)} replies")
            return self.replies[len(self.calls) - 1]
        if self.policy == "malformed":
            return MALFORMED_REPLY
        sections = split_sections(request.prompt)
        if "Candidate Knobs" in sections:
            return self._prune(sections)
        if "Current Configuration" not in sections:
            return MALFORMED_REPLY
        current = json.loads(sections["Current Configuration"])
        if self.policy == "echo":
            return json.dumps(current)
        return json.dumps(self._climb(current, _metrics(sections.get("Database Feedback", "")), request.temperature))

    # hill climbing

    def _aim(self, shape: str, optimum: float) -> float:
        return (optimum + 1.0) / 2.0 if shape == "step" else optimum

    def _climb(self, current: dict, metrics: dict[str, float], temperature: float) -> dict:
        proposal = dict(current)
        fraction = 0.5
        if temperature > 0:
            fraction = min(1.0, float(self._rng.uniform(*self.sample_fraction)))
        for planted in self.surface.important_knobs:
            name = planted.name
            if name not in current:
                continue
            pressure = metrics.get(f"{name}_pressure")
            if pressure is None or pressure <= self.threshold:
                continue
            knob = self.catalog[name]
            x = _coordinate(knob, current[name])
            x_new = x + fraction * (self._aim(planted.shape, planted.optimum) - x)
            proposal[name] = _value_at(knob, x_new)
        return proposal

    def _prune(self, sections: dict[str, str]) -> str:
        candidates = _CANDIDATE_RE.findall(sections["Candidate Knobs"])
        m = _K_RE.search(sections.get("Output Format", ""))
        k = int(m.group(1)) if m else len(candidates)
        if self.policy != "hill_climb":
            return json.dumps([{"name": n} for n in candidates[:k]])
        planted = sorted(self.surface.important_knobs, key=lambda p: -p.weight)
        chosen = [p.name for p in planted if p.name in candidates]
        chosen += [n for n in candidates if n not in chosen]
        entries = []
        by_name = {p.name: p for p in planted}
        for name in chosen[:k]:
            entry = {"name": name}
            knob = self.catalog[name]
            if name in by_name and knob.is_numeric:
                p = by_name[name]
                lo, hi = (p.optimum, 1.0) if p.shape == "step" else (p.optimum - 0.25, p.optimum + 0.25)
                entry["min"] = _value_at(knob, max(0.0, lo))
                entry["max"] = _value_at(knob, min(1.0, hi))
            entries.append(entry)
        return "Here are the knobs I would tune:\n" + json.dumps(entries, indent=2)


def _metrics(text: str) -> dict[str, float]:
    out = {}
    for line in text.splitlines():
        name, _, value = line.partition(":")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            continue
    return out


def _coordinate(knob, value) -> float:
    if knob.is_numeric:
        return (value - knob.min) / (knob.max - knob.min)
    if knob.ktype == ENUM:
        n = len(knob.choices)
        return 0.0 if n == 1 else knob.choices.index(value) / (n - 1)
    return 1.0 if value else 0.0


def _value_at(knob, x: float):
    x = min(max(x, 0.0), 1.0)
    if knob.ktype == INTEGER:
        return knob.min + round_half_away(x * (knob.max - knob.min))
    if knob.ktype == ENUM:
        return knob.choices[round_half_away(x * (len(knob.choices) - 1))]
    if knob.ktype == BOOLEAN:
        return x >= 0.5
    return knob.min + x * (knob.max - knob.min)


def mock_llm(policy: str, replies: Sequence[str] = (), target: SimulatedTarget | None = None, **kwargs) -> MockLLM:
    """Build a mock client; ``hill_climb`` reads the planted surface from ``target``."""
    if policy == "hill_climb":
        if target is None:
            raise ValueError("hill_climb mock needs the simulated target")
        kwargs.setdefault("surface", target.spec)
        kwargs.setdefault("catalog", target.space)
    return MockLLM(policy, replies=replies, **kwargs)
