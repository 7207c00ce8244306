"""Chat-completion request type and an OpenAI-compatible HTTP client."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass
from typing import Protocol

import httpx

log = logging.getLogger(__name__)

API_KEY_ENV = "KNOBFORGE_LLM_KEY"
ROLES = ("system", "user", "assistant")

# decoding settings: greedy for pruning/recommendation, nucleus sampling for initialization
DETERMINISTIC = {"temperature": 0.0, "top_p": 1.0}
NUCLEUS = {"temperature": 1.0, "top_p": 0.98}


class LLMError(RuntimeError):
    """The chat endpoint could not produce a reply."""


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    top_p: float = 1.0
    max_tokens: int = 2048

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple((r, c) for r, c in self.messages))
        for role, _ in self.messages:
            if role not in ROLES:
                raise ValueError(f"unknown role {role!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must lie in (0, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")

    @property
    def prompt(self) -> str:
        """Content of the last user message."""
        for role, content in reversed(self.messages):
            if role == "user":
                return content
        return ""

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": r, "content": c} for r, c in self.messages],
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
        }


class ChatClient(Protocol):
    model: str

    def complete(self, request: ChatRequest) -> str: ...


def make_request(client, prompt: str, sampling: dict, max_tokens: int = 2048) -> ChatRequest:
    return ChatRequest(getattr(client, "model", "mock"), (("user", prompt),), max_tokens=max_tokens, **sampling)


class HTTPChatClient:
    """POSTs to ``{base_url}/chat/completions`` with a bearer token from ``KNOBFORGE_LLM_KEY``.

    Rate limits (429), server errors and transport failures are retried with
    exponential backoff; other HTTP errors fail immediately.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        timeout_seconds: float = 120.0,
        api_key: str | None = None,
        max_retries: int = 3,
        backoff_seconds: float = 1.0,
        transport: httpx.BaseTransport | None = None,
        sleep=time.sleep,
    ) -> None:
        self.model = model
        base = base_url.rstrip("/")
        self.url = base if base.endswith("/chat/completions") else base + "/chat/completions"
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.max_retries = max_retries
        self.backoff_seconds = backoff_seconds
        self._sleep = sleep
        self._http = httpx.Client(timeout=timeout_seconds, transport=transport)

    def complete(self, request: ChatRequest) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        delay = self.backoff_seconds
        last: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = self._http.post(self.url, json=request.to_json(), headers=headers)
            except httpx.TransportError as exc:
                last = exc
            else:
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = LLMError(f"HTTP {resp.status_code}")
                elif resp.status_code >= 400:
                    raise LLMError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    return _first_content(resp)
            if attempt < self.max_retries:
                log.warning("chat request failed (%s); retrying in %.1fs", last, delay)
                self._sleep(delay)
                delay *= 2
        raise LLMError(f"chat request failed after {self.max_retries + 1} attempts: {last}")

    def close(self) -> None:
        self._http.close()


def _first_content(resp: httpx.Response) -> str:
    try:
        content = resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise LLMError("unexpected chat completion response shape") from exc
    if not isinstance(content, str):
        raise LLMError("chat completion content is not text")
    return content
