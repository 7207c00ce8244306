"""Pull configurations and knob selections out of free-form LLM replies."""

from __future__ import annotations

import json
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any

from ..knobspace import (
    CLAMP_ROUND,
    ENUM,
    INTEGER,
    Coercion,
    Configuration,
    ConfigurationSpace,
    PrunedSpace,
    parse_number,
    coerce_configuration,
)

_WRAPPER_KEYS = ("configuration", "config", "knobs", "recommended_configuration")


class ParseFailure(ValueError):
    def __init__(self, message: str, count: int | None = None) -> None:
        super().__init__(message)
        self.count = count


def extract_json(text: str) -> Any:
    """Return the first balanced JSON object or array embedded in ``text``."""
    start = 0
    while True:
        positions = [p for p in (text.find("{", start), text.find("[", start)) if p >= 0]
        if not positions:
            raise ParseFailure("no balanced JSON found in reply")
        begin = min(positions)
        end = _matching_close(text, begin)
        if end is not None:
            try:
                return json.loads(text[begin : end + 1])
            except json.JSONDecodeError:
                pass
        start = begin + 1


def _matching_close(text: str, begin: int) -> int | None:
    depth = 0
    in_string = False
    escaped = False
    for i in range(begin, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch in "{[":
            depth += 1
        elif ch in "}]":
            depth -= 1
            if depth == 0:
                return i
    return None


@dataclass
class ParsedConfig:
    config: Configuration
    log: list[Coercion] = field(default_factory=list)


def _unwrap(obj: Any, space: ConfigurationSpace) -> Mapping[str, Any]:
    if isinstance(obj, list):
        obj = next((item for item in obj if isinstance(item, Mapping)), None)
    if not isinstance(obj, Mapping):
        raise ParseFailure("reply JSON is not an object")
    for key in _WRAPPER_KEYS:
        inner = obj.get(key)
        if key not in space and isinstance(inner, Mapping) and len(obj) == 1:
            return inner
    return obj


def parse_config_response(
    space: ConfigurationSpace,
    raw_text: str,
    policy: str = CLAMP_ROUND,
    base: Mapping[str, Any] | None = None,
) -> ParsedConfig:
    """Configuration from a reply; knobs not mentioned come from ``base`` (defaults when omitted)."""
    candidate = _unwrap(extract_json(raw_text), space)
    checked = coerce_configuration(space, candidate, policy, base=base)
    if not checked.ok:
        problems = "; ".join(f"{v.knob}: {v.kind}" for v in checked.violations)
        raise ParseFailure(f"reply violates the space ({problems})")
    return ParsedConfig(checked.config, checked.log)


def _as_number(value: Any) -> float | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, str):
        parsed = parse_number(value)
        return None if parsed is None else float(parsed)
    return None


def _entries(obj: Any) -> list[Mapping[str, Any]]:
    if isinstance(obj, Mapping):
        for key in ("knobs", "selected", "selected_knobs"):
            if isinstance(obj.get(key), list):
                return obj[key]
        out = []
        for name, spec in obj.items():
            entry = dict(spec) if isinstance(spec, Mapping) else {}
            entry["name"] = name
            out.append(entry)
        return out
    if isinstance(obj, list):
        return [e if isinstance(e, Mapping) else {"name": e} for e in obj]
    raise ParseFailure("pruning reply is neither an array nor an object")


def parse_pruning_response(space: ConfigurationSpace, raw_text: str, k: int) -> PrunedSpace:
    """Selected knobs with ranges intersected against the catalog.

    Unknown names are dropped, repeated names keep their first entry, and a
    range that becomes empty or degenerate after intersection falls back to
    the catalog range. Fewer than ``k`` usable entries is a failure.
    """
    selected: list[str] = []
    ranges: dict[str, Any] = {}
    for entry in _entries(extract_json(raw_text)):
        name = entry.get("name") if isinstance(entry, Mapping) else None
        if not isinstance(name, str) or name not in space or name in selected:
            continue
        selected.append(name)
        knob = space[name]
        if knob.is_numeric:
            lo = _as_number(entry.get("min"))
            hi = _as_number(entry.get("max"))
            lo = knob.min if lo is None else max(lo, knob.min)
            hi = knob.max if hi is None else min(hi, knob.max)
            if knob.ktype == INTEGER:
                lo, hi = int(math.ceil(lo)), int(math.floor(hi))
            if lo < hi and (lo, hi) != (knob.min, knob.max):
                ranges[name] = (lo, hi)
        elif knob.ktype == ENUM:
            choices = entry.get("choices")
            if isinstance(choices, list):
                kept = tuple(c for c in knob.choices if c in choices)
                if kept and kept != knob.choices:
                    ranges[name] = kept
        if len(selected) == k:
            break
    if len(selected) < k:
        raise ParseFailure(f"only {len(selected)} usable knobs in reply, need {k}", count=len(selected))
    return PrunedSpace(space, tuple(selected), ranges)
