"""The three LLM subtasks: knob pruning, initial-configuration sampling, refinement."""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any

from ..knobspace import CLAMP_ROUND, Configuration, ConfigurationSpace, PrunedSpace
from ..target import Feedback
from .client import DETERMINISTIC, NUCLEUS, LLMError, make_request
from .parsing import ParseFailure, ParsedConfig, parse_config_response, parse_pruning_response
from .prompts import (
    OUTPUT_FORMAT_RECOMMENDATION,
    Demonstration,
    EnvironmentInfo,
    build_pruning_prompt,
    build_recommendation_prompt,
    output_format_pruning,
)

log = logging.getLogger(__name__)


class PruningFailed(RuntimeError):
    pass


class RefineFailed(RuntimeError):
    pass


def _corrective(prompt: str, output_format: str, problem: str) -> str:
    return (
        f"{prompt}\n## Correction\nYour previous reply could not be used ({problem}). "
        f"Follow the Output Format exactly: {output_format}\n"
    )


def llm_prune(client, space: ConfigurationSpace, env: EnvironmentInfo, k: int, retries: int = 3) -> PrunedSpace:
    """Ask for the ``k`` most impactful knobs and their ranges (greedy decoding)."""
    prompt = build_pruning_prompt(space, env, k).rendered
    text = prompt
    problem = ""
    for attempt in range(retries + 1):
        try:
            reply = client.complete(make_request(client, text, DETERMINISTIC))
            return parse_pruning_response(space, reply, k)
        except (ParseFailure, LLMError) as exc:
            problem = str(exc)
            log.warning("pruning attempt %d failed: %s", attempt + 1, problem)
            text = _corrective(prompt, output_format_pruning(k), problem)
    raise PruningFailed(f"no usable pruning reply after {retries + 1} attempts: {problem}")


@dataclass
class InitSamplingResult:
    configs: list[Configuration]
    attempts: int
    exhausted: bool
    logs: list[list] = field(default_factory=list)


def llm_sample_initial_configs(
    client,
    space: ConfigurationSpace,
    env: EnvironmentInfo,
    default_feedback: Feedback,
    u: int = 10,
    max_attempts: int = 50,
    demonstration: Demonstration | None = None,
    policy: str = CLAMP_ROUND,
) -> InitSamplingResult:
    """Sample with nucleus decoding until ``u`` distinct configurations are collected.

    Distinctness is exact equality after coercion. Unparseable replies count
    as attempts. ``exhausted`` is set when ``max_attempts`` runs out first.
    """
    if u < 1:
        raise ValueError("u must be >= 1")
    default = space.default_configuration()
    prompt = build_recommendation_prompt(space, env, default, default_feedback, demonstration).rendered
    request = make_request(client, prompt, NUCLEUS)
    configs: list[Configuration] = []
    logs: list[list] = []
    attempts = 0
    while len(configs) < u and attempts < max_attempts:
        attempts += 1
        try:
            parsed = parse_config_response(space, client.complete(request), policy, base=default)
        except (ParseFailure, LLMError) as exc:
            log.warning("initialization sample %d unusable: %s", attempts, exc)
            continue
        if parsed.config not in configs:
            configs.append(parsed.config)
            logs.append(parsed.log)
    exhausted = len(configs) < u
    if exhausted:
        log.warning("collected %d of %d distinct configurations in %d attempts", len(configs), u, attempts)
    return InitSamplingResult(configs, attempts, exhausted, logs)


def llm_refine_step(
    client,
    space: ConfigurationSpace,
    env: EnvironmentInfo,
    current: Mapping[str, Any],
    feedback: Feedback,
    retries: int = 3,
    demonstration: Demonstration | None = None,
    policy: str = CLAMP_ROUND,
) -> ParsedConfig:
    """One refinement: knobs the reply leaves out keep their current values."""
    prompt = build_recommendation_prompt(space, env, current, feedback, demonstration).rendered
    text = prompt
    problem = ""
    for attempt in range(retries + 1):
        try:
            reply = client.complete(make_request(client, text, DETERMINISTIC))
            return parse_config_response(space, reply, policy, base=current)
        except (ParseFailure, LLMError) as exc:
            problem = str(exc)
            log.warning("refinement attempt %d failed: %s", attempt + 1, problem)
            text = _corrective(prompt, OUTPUT_FORMAT_RECOMMENDATION, problem)
    raise RefineFailed(f"no usable refinement after {retries + 1} attempts: {problem}")
