"""Prompt construction for knob pruning, initialization and recommendation."""

from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any

from ..knobspace import ENUM, ConfigurationSpace
from ..target import LATENCY, Feedback

PRUNING_SECTIONS = (
    "Task Description",
    "Candidate Knobs",
    "Workload and Database Information",
    "Output Format",
)
RECOMMENDATION_SECTIONS = (
    "Task Description",
    "Demonstration for Knob Refinement",
    "Environment",
    "Information about Current Workload",
    "Output Format",
    "Current Configuration",
    "Database Feedback",
)


@dataclass(frozen=True)
class EnvironmentInfo:
    engine_name: str
    engine_version: str
    cpu_count: int
    memory_bytes: int
    workload_type: str = "OLTP"
    read_write_ratio: float = 0.5
    data_size_bytes: int = 0
    extra: str = ""
    metric_descriptions: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.cpu_count < 1:
            raise ValueError("cpu_count must be >= 1")
        if self.memory_bytes <= 0:
            raise ValueError("memory_bytes must be positive")
        if self.workload_type not in ("OLTP", "OLAP"):
            raise ValueError("workload_type must be OLTP or OLAP")
        if not 0.0 <= self.read_write_ratio <= 1.0:
            raise ValueError("read_write_ratio must lie in [0, 1]")

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> EnvironmentInfo:
        return cls(
            engine_name=data["engine_name"],
            engine_version=str(data.get("engine_version", "")),
            cpu_count=int(data["cpu_count"]),
            memory_bytes=int(data["memory_bytes"]),
            workload_type=data.get("workload_type", "OLTP"),
            read_write_ratio=float(data.get("read_write_ratio", 0.5)),
            data_size_bytes=int(data.get("data_size_bytes", 0)),
            extra=data.get("extra", ""),
            metric_descriptions=dict(data.get("metric_descriptions", {})),
        )


@dataclass(frozen=True)
class Demonstration:
    """One worked refinement: a configuration, its metrics, and the improved configuration."""

    current: Mapping[str, Any]
    internal_metrics: Mapping[str, float]
    refined: Mapping[str, Any]


@dataclass(frozen=True)
class PromptBundle:
    sections: tuple[tuple[str, str], ...]
    rendered: str

    def section(self, name: str) -> str:
        for title, text in self.sections:
            if title == name:
                return text
        raise KeyError(name)


def _render(sections: list[tuple[str, str]]) -> PromptBundle:
    rendered = "\n\n".join(f"## {title}\n{text.rstrip()}" for title, text in sections) + "\n"
    return PromptBundle(tuple(sections), rendered)


def _gib(n: int) -> str:
    return f"{n / 2**30:.1f} GiB"


def _workload_text(env: EnvironmentInfo) -> str:
    lines = [
        f"Workload type: {env.workload_type}",
        f"Read-write ratio: {env.read_write_ratio:.2f} reads per operation",
    ]
    if env.data_size_bytes:
        lines.append(f"Data size: {_gib(env.data_size_bytes)}")
    if env.extra:
        lines.append(env.extra)
    return "\n".join(lines)


def _knob_line(knob) -> str:
    kind = knob.ktype
    parts = [kind, f"range {knob.range_text()}", f"default {_value_text(knob.default)}"]
    if knob.unit:
        parts.append(f"unit {knob.unit}")
    text = f"- {knob.name} ({', '.join(parts)})"
    if knob.description:
        text += f": {knob.description}"
    return text


def _value_text(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def output_format_pruning(k: int) -> str:
    return (
        f"Select exactly {k} knobs. Reply with a JSON array of exactly {k} objects, most important first. "
        'Numeric knobs use {"name": <knob>, "min": <lower bound>, "max": <upper bound>}; '
        'enumeration knobs use {"name": <knob>, "choices": [<values>]}. '
        "Ranges must stay inside each knob's allowable range. Do not add any text outside the JSON."
    )


def build_pruning_prompt(space: ConfigurationSpace, env: EnvironmentInfo, k: int) -> PromptBundle:
    if not 1 <= k <= space.dimension:
        raise ValueError(f"k must lie in [1, {space.dimension}]")
    task = (
        f"You are an experienced database administrator. From the {space.dimension} candidate knobs below, "
        f"identify the {k} knobs with the largest impact on performance for this workload and, for each, "
        "the value range worth exploring during tuning."
    )
    candidates = "\n".join(_knob_line(knob) for knob in space)
    info = "\n".join(
        [
            f"Database engine: {env.engine_name} {env.engine_version}".rstrip(),
            f"CPUs: {env.cpu_count}",
            f"Memory: {_gib(env.memory_bytes)}",
            _workload_text(env),
        ]
    )
    return _render(
        [
            ("Task Description", task),
            ("Candidate Knobs", candidates),
            ("Workload and Database Information", info),
            ("Output Format", output_format_pruning(k)),
        ]
    )


OUTPUT_FORMAT_RECOMMENDATION = (
    "Reply with a single JSON object mapping every knob listed under Current Configuration to its new value. "
    "Give the final value of each knob directly, not an increase or decrease. Integer knobs take whole numbers "
    "inside their range; enumeration knobs take one of their listed values; boolean knobs take true or false. "
    "Keep knobs that need no change at their current value."
)


def _json_block(mapping: Mapping[str, Any]) -> str:
    return json.dumps(dict(mapping), indent=2, sort_keys=False)


def feedback_lines(feedback: Feedback) -> str:
    label = "Latency (seconds)" if feedback.objective_kind == LATENCY else "Throughput (TPS)"
    lines = [f"{label}: {feedback.objective:.6g}"]
    for name, value in feedback.internal_metrics.items():
        lines.append(f"{name}: {value:.6g}")
    return "\n".join(lines)


def build_recommendation_prompt(
    space: ConfigurationSpace,
    env: EnvironmentInfo,
    current: Mapping[str, Any],
    feedback: Feedback,
    demonstration: Demonstration | None = None,
) -> PromptBundle:
    """Prompt for initialization sampling and iterative refinement (same template)."""
    goal = "minimize query latency" if feedback.objective_kind == LATENCY else "maximize throughput"
    task = (
        f"You are an experienced database administrator. Refine the current configuration to {goal}, "
        "using the database feedback to spot bottlenecks. Change only the knobs that need changing."
    )
    if demonstration is None:
        demo = "No demonstration is available for this workload."
    else:
        demo = "\n".join(
            [
                "Current configuration:",
                _json_block(demonstration.current),
                "Inner metrics:",
                "\n".join(f"{k}: {v:.6g}" for k, v in demonstration.internal_metrics.items()) or "(none)",
                "Refined configuration:",
                _json_block(demonstration.refined),
            ]
        )
    env_lines = [
        f"Database engine: {env.engine_name} {env.engine_version}".rstrip(),
        f"CPUs: {env.cpu_count}",
        f"Memory: {_gib(env.memory_bytes)}",
        "Tunable knobs:",
    ]
    env_lines += [_knob_line(knob) for knob in space]
    if env.metric_descriptions:
        env_lines.append("Inner metrics:")
        env_lines += [f"- {name}: {text}" for name, text in env.metric_descriptions.items()]
    ordered = {k.name: current[k.name] for k in space}
    return _render(
        [
            ("Task Description", task),
            ("Demonstration for Knob Refinement", demo),
            ("Environment", "\n".join(env_lines)),
            ("Information about Current Workload", _workload_text(env)),
            ("Output Format", OUTPUT_FORMAT_RECOMMENDATION),
            ("Current Configuration", _json_block(ordered)),
            ("Database Feedback", feedback_lines(feedback)),
        ]
    )


def split_sections(rendered: str) -> dict[str, str]:
    """Recover ``{title: text}`` from a rendered prompt."""
    sections: dict[str, str] = {}
    title = None
    buf: list[str] = []
    for line in rendered.splitlines():
        if line.startswith("## "):
            if title is not None:
                sections[title] = "\n".join(buf).strip()
            title, buf = line[3:].strip(), []
        elif title is not None:
            buf.append(line)
    if title is not None:
        sections[title] = "\n".join(buf).strip()
    return sections
