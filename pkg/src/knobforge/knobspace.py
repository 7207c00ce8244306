"""Knobs, configuration spaces and configurations.

A :class:`ConfigurationSpace` is an ordered collection of :class:`Knob`
objects. Points in the space are :class:`Configuration` mappings. Raw values
coming from catalogs, LLM replies or history files go through
:func:`validate_configuration` (strict) or :func:`coerce_configuration`
(repairing) before anything else touches them.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

INTEGER = "integer"
REAL = "real"
ENUM = "enumeration"
BOOLEAN = "boolean"

KNOB_TYPES = (INTEGER, REAL, ENUM, BOOLEAN)
_TYPE_ALIASES = {
    "int": INTEGER,
    "integer": INTEGER,
    "float": REAL,
    "real": REAL,
    "double": REAL,
    "enum": ENUM,
    "enumeration": ENUM,
    "categorical": ENUM,
    "bool": BOOLEAN,
    "boolean": BOOLEAN,
}

CLAMP_ROUND = "clamp_round"
REJECT = "reject"

_TRUE_WORDS = {"on", "true", "yes", "1"}
_FALSE_WORDS = {"off", "false", "no", "0"}
_SIZE_SUFFIX = {"": 1, "k": 2**10, "m": 2**20, "g": 2**30, "t": 2**40}
_NUMBER_RE = re.compile(r"^\s*([-+]?\d+(?:\.\d*)?(?:[eE][-+]?\d+)?)\s*([kKmMgGtT]?)[bB]?\s*$")


class KnobError(ValueError):
    """Raised when a knob, space or pruned space breaks its invariants."""


def round_half_away(value: float) -> int:
    """Round to the nearest integer, ties away from zero (7.5 -> 8, -2.5 -> -3)."""
    if isinstance(value, int):
        return value
    return int(math.copysign(math.floor(abs(value) + 0.5), value))


@dataclass(frozen=True)
class Knob:
    name: str
    ktype: str
    default: Any
    min: float | None = None
    max: float | None = None
    choices: tuple[str, ...] = ()
    unit: str | None = None
    description: str = ""
    restart_required: bool = False

    def __post_init__(self) -> None:
        if not self.name or not isinstance(self.name, str):
            raise KnobError("knob name must be a non-empty string")
        if self.ktype not in KNOB_TYPES:
            raise KnobError(f"{self.name}: unknown knob type {self.ktype!r}")
        object.__setattr__(self, "choices", tuple(self.choices))
        if self.is_numeric:
            if self.min is None or self.max is None:
                raise KnobError(f"{self.name}: numeric knob needs min and max")
            if not self.min < self.max:
                raise KnobError(f"{self.name}: min must be strictly below max")
            if self.ktype == INTEGER:
                for bound in (self.min, self.max, self.default):
                    if isinstance(bound, bool) or not float(bound).is_integer():
                        raise KnobError(f"{self.name}: integer knob with non-integer bound/default")
                object.__setattr__(self, "min", int(self.min))
                object.__setattr__(self, "max", int(self.max))
                object.__setattr__(self, "default", int(self.default))
            else:
                object.__setattr__(self, "min", float(self.min))
                object.__setattr__(self, "max", float(self.max))
                object.__setattr__(self, "default", float(self.default))
            if not self.min <= self.default <= self.max:
                raise KnobError(f"{self.name}: default {self.default} outside [{self.min}, {self.max}]")
        elif self.ktype == ENUM:
            if not self.choices:
                raise KnobError(f"{self.name}: enumeration knob needs choices")
            if len(set(self.choices)) != len(self.choices):
                raise KnobError(f"{self.name}: duplicate choices")
            if self.default not in self.choices:
                raise KnobError(f"{self.name}: default {self.default!r} not among choices")
        else:
            if not isinstance(self.default, bool):
                raise KnobError(f"{self.name}: boolean knob needs a boolean default")

    @property
    def is_numeric(self) -> bool:
        return self.ktype in (INTEGER, REAL)

    def range_text(self) -> str:
        if self.is_numeric:
            return f"[{self.min}, {self.max}]"
        if self.ktype == ENUM:
            return "{" + ", ".join(self.choices) + "}"
        return "{true, false}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "type": self.ktype,
            "min": self.min,
            "max": self.max,
            "choices": list(self.choices) if self.ktype == ENUM else None,
            "default": self.default,
            "unit": self.unit,
            "description": self.description,
            "restart_required": self.restart_required,
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> Knob:
        ktype = _TYPE_ALIASES.get(str(raw.get("type", "")).lower())
        if ktype is None:
            raise KnobError(f"{raw.get('name')}: unknown knob type {raw.get('type')!r}")
        default = raw.get("default")
        if ktype == BOOLEAN and isinstance(default, str):
            default = default.strip().lower() in _TRUE_WORDS
        return cls(
            name=raw["name"],
            ktype=ktype,
            default=default,
            min=raw.get("min"),
            max=raw.get("max"),
            choices=tuple(raw.get("choices") or ()),
            unit=raw.get("unit"),
            description=raw.get("description") or "",
            restart_required=bool(raw.get("restart_required", False)),
        )


class Configuration(Mapping):
    """Immutable, hashable assignment of values to knobs.

    Instances are only created by space operations, which guarantees the
    values are legal for the owning space.
    """

    __slots__ = ("_values", "_key")

    def __init__(self, values: Mapping[str, Any]) -> None:
        self._values = dict(values)
        self._key = tuple(sorted(self._values.items()))

    def __getitem__(self, name: str) -> Any:
        return self._values[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    def __hash__(self) -> int:
        return hash(self._key)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Configuration):
            return self._key == other._key
        if isinstance(other, Mapping):
            return self._values == dict(other)
        return NotImplemented

    def __repr__(self) -> str:
        return f"Configuration({self._values!r})"

    def to_json(self) -> dict[str, Any]:
        return dict(self._values)


@dataclass(frozen=True)
class Violation:
    kind: str  # unknown_knob | missing_knob | type_mismatch | out_of_range
    knob: str
    detail: str = ""


@dataclass(frozen=True)
class Coercion:
    knob: str
    original: Any
    coerced: Any
    reason: str  # rounded | clamped | parsed | dropped_unknown | filled_default


@dataclass
class CheckResult:
    """Outcome of validating or coercing a raw candidate."""

    config: Configuration | None
    violations: list[Violation] = field(default_factory=list)
    log: list[Coercion] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.config is not None and not self.violations


class ConfigurationSpace:
    """Ordered, immutable collection of knobs."""

    def __init__(self, knobs) -> None:
        knobs = tuple(knobs)
        if not knobs:
            raise KnobError("a configuration space needs at least one knob")
        names = [k.name for k in knobs]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise KnobError(f"duplicate knob names: {', '.join(dupes)}")
        self._knobs = knobs
        self._index = {k.name: i for i, k in enumerate(knobs)}

    @property
    def knobs(self) -> tuple[Knob, ...]:
        return self._knobs

    @property
    def names(self) -> list[str]:
        return [k.name for k in self._knobs]

    @property
    def dimension(self) -> int:
        return len(self._knobs)

    def __len__(self) -> int:
        return len(self._knobs)

    def __iter__(self) -> Iterator[Knob]:
        return iter(self._knobs)

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __getitem__(self, name: str) -> Knob:
        return self._knobs[self._index[name]]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ConfigurationSpace) and self._knobs == other._knobs

    def __hash__(self) -> int:
        return hash(self._knobs)

    def __repr__(self) -> str:
        return f"ConfigurationSpace({self.names!r})"

    def index(self, name: str) -> int:
        return self._index[name]

    def default_configuration(self) -> Configuration:
        return Configuration({k.name: k.default for k in self._knobs})

    def subspace(self, names) -> ConfigurationSpace:
        return ConfigurationSpace(self[n] for n in names)

    def digest(self) -> str:
        payload = json.dumps([k.to_dict() for k in self._knobs], sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    # vectorised helpers used by samplers and surrogates

    def snap(self, unit: np.ndarray) -> np.ndarray:
        """Map arbitrary unit-cube rows onto the coordinates of legal configurations."""
        unit = np.clip(np.atleast_2d(np.asarray(unit, dtype=float)), 0.0, 1.0)
        out = unit.copy()
        for j, knob in enumerate(self._knobs):
            col = unit[:, j]
            if knob.ktype == INTEGER:
                span = float(knob.max - knob.min)
                steps = np.floor(col * span + 0.5)
                out[:, j] = np.clip(steps, 0.0, span) / span
            elif knob.ktype == ENUM:
                n = len(knob.choices)
                out[:, j] = 0.0 if n == 1 else np.floor(col * (n - 1) + 0.5) / (n - 1)
            elif knob.ktype == BOOLEAN:
                out[:, j] = (col >= 0.5).astype(float)
        return out


def validate_configuration(space: ConfigurationSpace, candidate: Mapping[str, Any]) -> CheckResult:
    """Strictly check ``candidate``; never raises, reports every problem."""
    violations: list[Violation] = []
    values: dict[str, Any] = {}
    for name in candidate:
        if name not in space:
            violations.append(Violation("unknown_knob", name))
    for knob in space:
        if knob.name not in candidate:
            violations.append(Violation("missing_knob", knob.name))
            continue
        value, problem = _check_value(knob, candidate[knob.name])
        if problem is not None:
            violations.append(problem)
        else:
            values[knob.name] = value
    if violations:
        return CheckResult(None, violations)
    return CheckResult(Configuration({k.name: values[k.name] for k in space}))


def _check_value(knob: Knob, value: Any) -> tuple[Any, Violation | None]:
    if knob.ktype == BOOLEAN:
        if isinstance(value, bool):
            return value, None
        return None, Violation("type_mismatch", knob.name, f"expected boolean, got {value!r}")
    if knob.ktype == ENUM:
        if not isinstance(value, str):
            return None, Violation("type_mismatch", knob.name, f"expected one of {knob.choices}, got {value!r}")
        if value not in knob.choices:
            return None, Violation("out_of_range", knob.name, f"{value!r} not in {knob.choices}")
        return value, None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return None, Violation("type_mismatch", knob.name, f"expected number, got {value!r}")
    if isinstance(value, float) and not math.isfinite(value):
        return None, Violation("type_mismatch", knob.name, f"non-finite value {value!r}")
    if knob.ktype == INTEGER:
        if isinstance(value, float):
            if not value.is_integer():
                return None, Violation("type_mismatch", knob.name, f"expected integer, got {value!r}")
            value = int(value)
    else:
        value = float(value)
    if not knob.min <= value <= knob.max:
        return None, Violation("out_of_range", knob.name, f"{value} outside {knob.range_text()}")
    return value, None


def parse_number(text: str) -> float | int | None:
    m = _NUMBER_RE.match(text)
    if m is None:
        return None
    number, suffix = m.groups()
    scale = _SIZE_SUFFIX[suffix.lower()]
    if re.fullmatch(r"[-+]?\d+", number):
        return int(number) * scale
    return float(number) * scale


def coerce_configuration(
    space: ConfigurationSpace,
    candidate: Mapping[str, Any],
    policy: str = CLAMP_ROUND,
    base: Mapping[str, Any] | None = None,
) -> CheckResult:
    """Repair a raw candidate into a legal configuration.

    Under ``clamp_round`` numeric values are parsed, rounded half away from
    zero for integer knobs and clamped into range; unknown knobs are dropped
    and missing ones filled from ``base`` (the space defaults when omitted).
    Enumeration values outside the choices are never repaired. Under
    ``reject`` this is :func:`validate_configuration`.
    """
    if policy == REJECT:
        return validate_configuration(space, candidate)
    if policy != CLAMP_ROUND:
        raise ValueError(f"unknown coercion policy {policy!r}")
    base = space.default_configuration() if base is None else base
    log: list[Coercion] = []
    violations: list[Violation] = []
    values: dict[str, Any] = {}
    for name in candidate:
        if name not in space:
            log.append(Coercion(name, candidate[name], None, "dropped_unknown"))
    for knob in space:
        if knob.name not in candidate:
            values[knob.name] = base[knob.name]
            log.append(Coercion(knob.name, None, base[knob.name], "filled_default"))
            continue
        raw = candidate[knob.name]
        value, problem = _coerce_value(knob, raw, log)
        if problem is not None:
            violations.append(problem)
        else:
            values[knob.name] = value
    if violations:
        return CheckResult(None, violations, log)
    return CheckResult(Configuration({k.name: values[k.name] for k in space}), [], log)


def _coerce_value(knob: Knob, raw: Any, log: list[Coercion]) -> tuple[Any, Violation | None]:
    name = knob.name
    if knob.ktype == ENUM:
        return _check_value(knob, raw)
    if knob.ktype == BOOLEAN:
        if isinstance(raw, bool):
            return raw, None
        word = str(raw).strip().lower()
        if word in _TRUE_WORDS or word in _FALSE_WORDS:
            value = word in _TRUE_WORDS
            log.append(Coercion(name, raw, value, "parsed"))
            return value, None
        return None, Violation("type_mismatch", name, f"expected boolean, got {raw!r}")
    value = raw
    if isinstance(value, str):
        parsed = parse_number(value)
        if parsed is None:
            return None, Violation("type_mismatch", name, f"expected number, got {raw!r}")
        log.append(Coercion(name, raw, parsed, "parsed"))
        value = parsed
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return None, Violation("type_mismatch", name, f"expected number, got {raw!r}")
    if isinstance(value, float) and not math.isfinite(value):
        return None, Violation("type_mismatch", name, f"non-finite value {raw!r}")
    if knob.ktype == INTEGER:
        if isinstance(value, float) and not value.is_integer():
            rounded = round_half_away(value)
            log.append(Coercion(name, value, rounded, "rounded"))
            value = rounded
        value = int(value)
    else:
        value = float(value)
    clamped = min(max(value, knob.min), knob.max)
    if clamped != value:
        log.append(Coercion(name, value, clamped, "clamped"))
    return clamped, None


def normalize(space: ConfigurationSpace, config: Mapping[str, Any]) -> np.ndarray:
    """Embed a configuration in the unit hypercube (one coordinate per knob)."""
    if len(config) != space.dimension or any(n not in config for n in space.names):
        raise ValueError("configuration does not match the space dimension")
    vec = np.empty(space.dimension)
    for j, knob in enumerate(space):
        value = config[knob.name]
        if knob.is_numeric:
            vec[j] = (value - knob.min) / (knob.max - knob.min)
        elif knob.ktype == ENUM:
            n = len(knob.choices)
            vec[j] = 0.0 if n == 1 else knob.choices.index(value) / (n - 1)
        else:
            vec[j] = 1.0 if value else 0.0
    return vec


def denormalize(space: ConfigurationSpace, vector) -> Configuration:
    """Inverse of :func:`normalize`; integer and enumeration knobs round to the nearest legal value."""
    vec = np.asarray(vector, dtype=float).ravel()
    if vec.shape[0] != space.dimension:
        raise ValueError(f"expected {space.dimension} coordinates, got {vec.shape[0]}")
    if np.any(vec < -1e-9) or np.any(vec > 1 + 1e-9) or not np.all(np.isfinite(vec)):
        raise ValueError("coordinates must lie in [0, 1]")
    vec = np.clip(vec, 0.0, 1.0)
    values: dict[str, Any] = {}
    for x, knob in zip(vec, space):
        x = float(x)
        if knob.ktype == INTEGER:
            span = knob.max - knob.min
            values[knob.name] = min(max(knob.min + round_half_away(x * span), knob.min), knob.max)
        elif knob.ktype == REAL:
            values[knob.name] = min(max(knob.min + x * (knob.max - knob.min), knob.min), knob.max)
        elif knob.ktype == ENUM:
            n = len(knob.choices)
            values[knob.name] = knob.choices[0 if n == 1 else round_half_away(x * (n - 1))]
        else:
            values[knob.name] = x >= 0.5
    return Configuration(values)


@dataclass(frozen=True)
class PrunedSpace:
    """A selection of knobs from a parent space with narrowed ranges.

    ``narrowed_ranges`` maps a selected knob to ``(min, max)`` for numeric
    knobs or a tuple of choices for enumerations. Knobs without an entry keep
    their parent range.
    """

    parent: ConfigurationSpace
    selected: tuple[str, ...]
    narrowed_ranges: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "selected", tuple(self.selected))
        if len(set(self.selected)) != len(self.selected):
            raise KnobError("duplicate selected knobs")
        if not self.selected:
            raise KnobError("a pruned space selects at least one knob")
        for name in self.selected:
            if name not in self.parent:
                raise KnobError(f"selected knob {name!r} not in parent space")
        for name, rng in self.narrowed_ranges.items():
            if name not in self.selected:
                raise KnobError(f"narrowed range for unselected knob {name!r}")
            knob = self.parent[name]
            if knob.is_numeric:
                lo, hi = rng
                if not (knob.min <= lo < hi <= knob.max):
                    raise KnobError(f"{name}: narrowed range [{lo}, {hi}] invalid for {knob.range_text()}")
            elif knob.ktype == ENUM:
                if not rng or any(c not in knob.choices for c in rng):
                    raise KnobError(f"{name}: narrowed choices {rng!r} invalid")
            else:
                raise KnobError(f"{name}: boolean knobs cannot be narrowed")

    @property
    def k(self) -> int:
        return len(self.selected)

    def to_json(self) -> dict[str, Any]:
        ranges = {}
        for name, rng in self.narrowed_ranges.items():
            if self.parent[name].is_numeric:
                ranges[name] = {"min": rng[0], "max": rng[1]}
            else:
                ranges[name] = {"choices": list(rng)}
        return {"parent_digest": self.parent.digest(), "selected": list(self.selected), "narrowed_ranges": ranges}

    @classmethod
    def from_json(cls, parent: ConfigurationSpace, data: Mapping[str, Any]) -> PrunedSpace:
        digest = data.get("parent_digest")
        if digest is not None and digest != parent.digest():
            raise KnobError("pruned space was built for a different catalog")
        ranges: dict[str, Any] = {}
        for name, rng in (data.get("narrowed_ranges") or {}).items():
            ranges[name] = tuple(rng["choices"]) if "choices" in rng else (rng["min"], rng["max"])
        return cls(parent, tuple(data["selected"]), ranges)


def apply_pruned(pruned: PrunedSpace) -> ConfigurationSpace:
    """Build the reduced space: selected knobs only, narrowed ranges, defaults clamped in."""
    knobs = []
    for name in pruned.selected:
        knob = pruned.parent[name]
        rng = pruned.narrowed_ranges.get(name)
        if rng is None:
            knobs.append(knob)
        elif knob.is_numeric:
            lo, hi = rng
            if knob.ktype == INTEGER:
                lo, hi = int(math.ceil(lo)), int(math.floor(hi))
            default = min(max(knob.default, lo), hi)
            knobs.append(_replace(knob, min=lo, max=hi, default=default))
        else:
            choices = tuple(c for c in knob.choices if c in rng)
            default = knob.default if knob.default in choices else choices[0]
            knobs.append(_replace(knob, choices=choices, default=default))
    return ConfigurationSpace(knobs)


def _replace(knob: Knob, **changes) -> Knob:
    fields = dict(
        name=knob.name,
        ktype=knob.ktype,
        default=knob.default,
        min=knob.min,
        max=knob.max,
        choices=knob.choices,
        unit=knob.unit,
        description=knob.description,
        restart_required=knob.restart_required,
    )
    fields.update(changes)
    return Knob(**fields)


def complete_configuration(full: ConfigurationSpace, partial: Mapping[str, Any]) -> Configuration:
    """Fill knobs absent from ``partial`` with ``full``'s catalog defaults."""
    return Configuration({k.name: partial.get(k.name, k.default) for k in full})


def load_catalog(path: str | Path) -> ConfigurationSpace:
    """Read a JSON knob catalog (array of knob objects; unknown keys ignored)."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, Mapping):
        data = data.get("knobs", [])
    return ConfigurationSpace(Knob.from_dict(item) for item in data)


def dump_catalog(space: ConfigurationSpace, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([k.to_dict() for k in space], fh, indent=2, sort_keys=True)
        fh.write("\n")
