"""Session configuration: one JSON file naming the catalog, target, LLM and budgets.

Strings may reference environment variables as ``${NAME}``; relative paths
resolve against the session file's directory.

Example::

    {
      "session_id": "sysbench-rw",
      "catalog": "catalog.json",
      "objective_kind": "throughput_tps",
      "target": {"simulator": "surface.json"},
      "environment": {"engine_name": "MySQL", "engine_version": "8.0",
                      "cpu_count": 8, "memory_bytes": 17179869184},
      "llm": {"mock": "hill_climb"},
      "budgets": {"vbo": {"max_iterations": 60}, "llm": {"max_rounds": 30}},
      "output_dir": "runs",
      "seed": 0
    }

An external target replaces ``simulator`` with ``"external": {"apply": ...,
"restart": ..., "benchmark": ..., "metrics": ..., "objective_pattern": ...}``;
a real model replaces ``mock`` with ``base_url``, ``model`` and
``timeout_seconds``.
"""

from __future__ import annotations

import json
import os
import re
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .advisor.client import HTTPChatClient
from .advisor.mock import POLICIES, mock_llm
from .advisor.prompts import EnvironmentInfo
from .knobspace import CLAMP_ROUND, REJECT, ConfigurationSpace, KnobError, load_catalog
from .target import OBJECTIVE_KINDS, THROUGHPUT, ExternalHooks, ExternalTarget, SimulatedTarget, SynthSurfaceSpec

_VAR_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")

DEFAULT_ENVIRONMENT = {"engine_name": "MySQL", "engine_version": "8.0", "cpu_count": 8, "memory_bytes": 16 * 2**30}


class SessionError(ValueError):
    """The session file is missing, malformed, or references something unusable."""


def interpolate(value: Any, environ: Mapping[str, str] | None = None) -> Any:
    environ = os.environ if environ is None else environ
    if isinstance(value, str):

        def sub(m: re.Match) -> str:
            if m.group(1) not in environ:
                raise SessionError(f"environment variable {m.group(1)} is not set")
            return environ[m.group(1)]

        return _VAR_RE.sub(sub, value)
    if isinstance(value, list):
        return [interpolate(v, environ) for v in value]
    if isinstance(value, Mapping):
        return {k: interpolate(v, environ) for k, v in value.items()}
    return value


@dataclass
class SessionConfig:
    session_id: str
    catalog_path: Path
    target: dict[str, Any]
    objective_kind: str = THROUGHPUT
    llm: dict[str, Any] = field(default_factory=dict)
    environment: dict[str, Any] = field(default_factory=lambda: dict(DEFAULT_ENVIRONMENT))
    budgets: dict[str, Any] = field(default_factory=dict)
    output_dir: Path = Path("runs")
    seed: int = 0
    coercion_policy: str = CLAMP_ROUND
    base_dir: Path = Path(".")

    def budget(self, name: str) -> dict[str, Any]:
        return dict(self.budgets.get(name, {}))


def _resolve(base: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base / path


def load_session(path: str | Path, environ: Mapping[str, str] | None = None) -> SessionConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise SessionError(f"session file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise SessionError(f"session file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, Mapping):
        raise SessionError("session file must hold a JSON object")
    raw = interpolate(raw, environ)
    base = path.resolve().parent
    try:
        catalog = _resolve(base, raw["catalog"])
        target = dict(raw["target"])
    except KeyError as exc:
        raise SessionError(f"session file lacks {exc.args[0]!r}") from exc
    if not catalog.is_file():
        raise SessionError(f"catalog {catalog} does not exist")
    if ("simulator" in target) == ("external" in target):
        raise SessionError("target must name exactly one of 'simulator' or 'external'")
    if isinstance(target.get("simulator"), str):
        surface = _resolve(base, target["simulator"])
        if not surface.is_file():
            raise SessionError(f"surface file {surface} does not exist")
        target["simulator"] = surface
    kind = raw.get("objective_kind", THROUGHPUT)
    if kind not in OBJECTIVE_KINDS:
        raise SessionError(f"objective_kind must be one of {OBJECTIVE_KINDS}")
    policy = raw.get("coercion_policy", CLAMP_ROUND)
    if policy not in (CLAMP_ROUND, REJECT):
        raise SessionError("coercion_policy must be clamp_round or reject")
    env = dict(DEFAULT_ENVIRONMENT)
    env.update(raw.get("environment", {}))
    return SessionConfig(
        session_id=str(raw.get("session_id", path.stem)),
        catalog_path=catalog,
        target=target,
        objective_kind=kind,
        llm=dict(raw.get("llm", {})),
        environment=env,
        budgets=dict(raw.get("budgets", {})),
        output_dir=_resolve(base, raw.get("output_dir", "runs")),
        seed=int(raw.get("seed", 0)),
        coercion_policy=policy,
        base_dir=base,
    )


def build_catalog(session: SessionConfig) -> ConfigurationSpace:
    try:
        return load_catalog(session.catalog_path)
    except (KnobError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise SessionError(f"catalog {session.catalog_path}: {exc}") from exc


def build_target(session: SessionConfig, space: ConfigurationSpace):
    if "simulator" in session.target:
        source = session.target["simulator"]
        try:
            data = json.loads(Path(source).read_text(encoding="utf-8")) if isinstance(source, Path) else source
            spec = SynthSurfaceSpec.from_json(data)
        except (KeyError, TypeError, ValueError) as exc:
            raise SessionError(f"simulator surface: {exc}") from exc
        if spec.objective_kind != session.objective_kind:
            raise SessionError(f"surface objective {spec.objective_kind} differs from session {session.objective_kind}")
        try:
            return SimulatedTarget(space, spec)
        except ValueError as exc:
            raise SessionError(str(exc)) from exc
    hooks_raw = dict(session.target["external"])
    workdir = hooks_raw.pop("workdir", None)
    try:
        hooks = ExternalHooks(**hooks_raw)
        return ExternalTarget(space, hooks, session.objective_kind, _resolve(session.base_dir, workdir) if workdir else None)
    except (TypeError, ValueError, re.error) as exc:
        raise SessionError(f"external target: {exc}") from exc


def build_environment(session: SessionConfig) -> EnvironmentInfo:
    try:
        return EnvironmentInfo.from_json(session.environment)
    except (KeyError, TypeError, ValueError) as exc:
        raise SessionError(f"environment: {exc}") from exc


def build_client(session: SessionConfig, target=None, seed: int | None = None):
    llm = session.llm
    if not llm:
        raise SessionError("session has no 'llm' section")
    if "mock" in llm:
        policy = llm["mock"]
        if policy not in POLICIES:
            raise SessionError(f"unknown mock policy {policy!r}")
        if policy == "hill_climb" and not isinstance(target, SimulatedTarget):
            raise SessionError("the hill_climb mock needs a simulator target")
        kwargs = {"seed": session.seed if seed is None else seed}
        if "threshold" in llm:
            kwargs["threshold"] = float(llm["threshold"])
        if "sample_fraction" in llm:
            kwargs["sample_fraction"] = tuple(llm["sample_fraction"])
        return mock_llm(policy, replies=llm.get("replies", ()), target=target, **kwargs)
    try:
        return HTTPChatClient(
            base_url=llm["base_url"],
            model=llm["model"],
            timeout_seconds=float(llm.get("timeout_seconds", 120.0)),
            max_retries=int(llm.get("max_retries", 3)),
        )
    except KeyError as exc:
        raise SessionError(f"llm section lacks {exc.args[0]!r}") from exc
