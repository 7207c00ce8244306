"""Iterative LLM refinement: evaluate, show the model the feedback, apply its suggestion, repeat."""

from __future__ import annotations

import logging
from collections.abc import Callable

from ..advisor.prompts import Demonstration, EnvironmentInfo
from ..advisor.tasks import RefineFailed, llm_refine_step
from ..knobspace import CLAMP_ROUND, ConfigurationSpace
from ..metrics import RunHistory
from ..target import Observation, run_trial

log = logging.getLogger(__name__)


def llm_tuning_run(
    target,
    space: ConfigurationSpace,
    env: EnvironmentInfo,
    client,
    max_rounds: int = 30,
    retries: int = 3,
    max_consecutive_failures: int = 5,
    history: RunHistory | None = None,
    session_id: str = "session",
    method_label: str = "LLM",
    demonstration: Demonstration | None = None,
    policy: str = CLAMP_ROUND,
    on_observation: Callable[[Observation], None] | None = None,
) -> RunHistory:
    """Run up to ``max_rounds`` refinements starting from the default configuration.

    Each round refines the most recent successfully evaluated configuration.
    A round whose reply cannot be parsed (after ``retries``) uses up the round
    but records nothing; ``max_consecutive_failures`` such rounds in a row end
    the run. Failed evaluations are recorded and keep their iteration index.
    """
    if history is None:
        history = RunHistory(session_id, target.objective_kind, method_label, space_digest=space.digest())

    def record(obs: Observation) -> None:
        history.append(obs)
        if on_observation is not None:
            on_observation(obs)

    if not history.observations:
        record(run_trial(target, space.default_configuration(), 0))
    rounds = history.next_iteration - 1
    failures = 0
    while rounds < max_rounds and failures < max_consecutive_failures:
        ok = history.successful()
        if not ok:
            log.error("the default configuration failed to evaluate; nothing to refine")
            break
        rounds += 1
        current = ok[-1]
        try:
            step = llm_refine_step(client, space, env, current.config, current.feedback, retries, demonstration, policy)
        except RefineFailed as exc:
            failures += 1
            log.warning("round %d produced no configuration (%d in a row): %s", rounds, failures, exc)
            continue
        failures = 0
        record(run_trial(target, step.config, history.next_iteration, step.log))
    return history
