"""LLM-facing pieces: prompts, chat clients, reply parsing and the three tuning subtasks."""

from .client import API_KEY_ENV, DETERMINISTIC, NUCLEUS, ChatRequest, HTTPChatClient, LLMError
from .mock import MockLLM, mock_llm
from .parsing import ParseFailure, parse_config_response, parse_pruning_response
from .prompts import (
    Demonstration,
    EnvironmentInfo,
    PromptBundle,
    build_pruning_prompt,
    build_recommendation_prompt,
)
from .tasks import (
    InitSamplingResult,
    PruningFailed,
    RefineFailed,
    llm_prune,
    llm_refine_step,
    llm_sample_initial_configs,
)

__all__ = [
    "API_KEY_ENV",
    "DETERMINISTIC",
    "NUCLEUS",
    "ChatRequest",
    "Demonstration",
    "EnvironmentInfo",
    "HTTPChatClient",
    "InitSamplingResult",
    "LLMError",
    "MockLLM",
    "ParseFailure",
    "PromptBundle",
    "PruningFailed",
    "RefineFailed",
    "build_pruning_prompt",
    "build_recommendation_prompt",
    "llm_prune",
    "llm_refine_step",
    "llm_sample_initial_configs",
    "mock_llm",
    "parse_config_response",
    "parse_pruning_response",
]
