"""Command-line entry point: ``knobforge {prune,init,tune,report,simulate}``.

Exit codes: 0 success, 1 configuration error, 2 target error, 3 LLM error,
64 usage error, 65 bad input data.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any

from .advisor.client import LLMError
from .advisor.tasks import PruningFailed, RefineFailed, llm_prune, llm_sample_initial_configs
from .knobspace import KnobError, PrunedSpace, apply_pruned, coerce_configuration
from .metrics import (
    HistoryFormatError,
    HistoryWriter,
    MetricsError,
    RunHistory,
    comparison_report,
    read_jsonl,
    run_report,
)
from .optimize.bo import OptimizationAborted, TunerBudget, model_based_run
from .optimize.llm_loop import llm_tuning_run
from .pruning import (
    ImportanceRanking,
    InsufficientData,
    collect_observations,
    data_driven_pruned_space,
    pruning_report,
    shapley_importance,
)
from .session import SessionError, build_catalog, build_client, build_environment, build_target, load_session
from .target import TargetError, run_trial

log = logging.getLogger("knobforge")

EXIT_CONFIG = 1
EXIT_TARGET = 2
EXIT_LLM = 3
EXIT_USAGE = 64
EXIT_DATA = 65


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _write_json(path: Path, obj: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dumps(obj), encoding="utf-8")


def _read_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError(f"{path}: file not found") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: line {exc.lineno}: invalid JSON ({exc.msg})") from exc


class Context:
    def __init__(self, args: argparse.Namespace) -> None:
        self.args = args
        if not args.session:
            raise UsageError("--session is required for this command")
        self.session = load_session(args.session)
        if args.seed is not None:
            self.session.seed = args.seed
        if args.output_dir is not None:
            self.session.output_dir = Path(args.output_dir)
        self.catalog = build_catalog(self.session)
        self.target = build_target(self.session, self.catalog)

    @property
    def seed(self) -> int:
        return self.session.seed

    def out(self, name: str) -> Path:
        self.session.output_dir.mkdir(parents=True, exist_ok=True)
        return self.session.output_dir / name

    def say(self, text: str) -> None:
        if not self.args.quiet:
            sys.stdout.write(text if text.endswith("\n") else text + "\n")

    def client(self):
        return build_client(self.session, self.target, self.seed)

    def space(self, pruned_path: str | None):
        if not pruned_path:
            return self.catalog
        try:
            return apply_pruned(PrunedSpace.from_json(self.catalog, _read_json(pruned_path)))
        except (KnobError, KeyError, TypeError) as exc:
            raise DataError(f"{pruned_path}: {exc}") from exc

    def seeds(self, path: str | None, space) -> list:
        if not path:
            return []
        data = _read_json(path)
        configs = data.get("configs", []) if isinstance(data, dict) else data
        out = []
        for i, raw in enumerate(configs):
            checked = coerce_configuration(space, raw, self.session.coercion_policy)
            if not checked.ok:
                raise DataError(f"{path}: seed {i} violates the space: {checked.violations}")
            out.append(checked.config)
        return out


# ---------------------------------------------------------------- prune


def cmd_prune(ctx: Context) -> int:
    a = ctx.args
    if a.k < 1 or a.k > ctx.catalog.dimension:
        raise UsageError(f"--k must lie in [1, {ctx.catalog.dimension}]")
    if a.method == "llm":
        env = build_environment(ctx.session)
        pruned = llm_prune(ctx.client(), ctx.catalog, env, a.k, retries=a.retries)
        ranking = ImportanceRanking.from_names(pruned.selected, "llm", "LLM")
    else:
        collected = collect_observations(ctx.target, ctx.catalog, a.samples, ctx.seed)
        ranking = shapley_importance(collected.observations, ctx.catalog, a.permutations, ctx.seed)
        pruned = data_driven_pruned_space(ranking, collected.observations, ctx.catalog, a.k)
        _write_json(ctx.out("ranking.json"), ranking.to_json())
    _write_json(ctx.out("pruned.json"), pruned.to_json())
    if a.reference:
        ref = _load_ranking(a.reference)
        report = pruning_report([ranking], ref, a.k)
    else:
        report = pruning_report([], ranking, a.k)
    _write_json(ctx.out("pruning_report.json"), report.to_json())
    ctx.out("pruning_report.txt").write_text(report.to_text(), encoding="utf-8")
    ctx.say(report.to_text())
    ctx.say(f"pruned space written to {ctx.out('pruned.json')}")
    return 0


def _load_ranking(path: str) -> ImportanceRanking:
    data = _read_json(path)
    try:
        if isinstance(data, list):
            return ImportanceRanking.from_names(data, "llm", Path(path).stem)
        return ImportanceRanking.from_json(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------- init


def _budget(ctx: Context, method: str, override: int | None, seeds: int = 0) -> TunerBudget:
    cfg = ctx.session.budget(method)
    max_iterations = override if override is not None else int(cfg.get("max_iterations", 400))
    init_points = int(cfg.get("init_points", 10))
    if max_iterations < 1:
        raise UsageError("--budget must be >= 1")
    init_points = max(min(init_points, max_iterations), min(seeds, max_iterations))
    return TunerBudget(
        max_iterations=max_iterations,
        init_points=init_points,
        rng_seed=ctx.seed,
        candidates=int(cfg.get("candidates", 2048)),
        local_candidates=int(cfg.get("local_candidates", 10)),
        local_scale=float(cfg.get("local_scale", 0.05)),
    )


def cmd_init(ctx: Context) -> int:
    a = ctx.args
    if a.u < 1:
        raise UsageError("--u must be >= 1")
    space = ctx.space(a.pruned)
    env = build_environment(ctx.session)
    default = run_trial(ctx.target, space.default_configuration(), 0)
    if not default.ok:
        raise TargetError(f"default configuration failed: {default.error}")
    cfg = ctx.session.budget("init")
    max_attempts = a.max_attempts or int(cfg.get("max_attempts", 5 * a.u))
    result = llm_sample_initial_configs(
        ctx.client(), space, env, default.feedback, a.u, max_attempts, policy=ctx.session.coercion_policy
    )
    seeds_path = ctx.out("seeds.json")
    _write_json(
        seeds_path,
        {
            "configs": [c.to_json() for c in result.configs],
            "attempts": result.attempts,
            "exhausted": result.exhausted,
            "requested": a.u,
        },
    )
    if result.exhausted:
        sys.stderr.write(
            f"warning: only {len(result.configs)} of {a.u} distinct configurations after {result.attempts} attempts\n"
        )
    ctx.say(f"{len(result.configs)} configurations written to {seeds_path}")
    if a.then == "none" or not result.configs:
        return 0
    target = build_target(ctx.session, ctx.catalog)
    budget = _budget(ctx, a.then, a.budget, len(result.configs))
    return _run_model_based(ctx, target, space, a.then, budget, result.configs, f"{a.then.upper()}+LLM-init", None, False)


# ---------------------------------------------------------------- tune


def _history_path(ctx: Context, label: str) -> Path:
    if ctx.args.history:
        return Path(ctx.args.history)
    return ctx.out(f"{ctx.session.session_id}-{label.lower()}.jsonl")


def _open_history(ctx: Context, path: Path, space, resume: bool):
    if not resume or not path.exists():
        return None
    try:
        history = read_jsonl(path, space)
    except HistoryFormatError as exc:
        raise DataError(str(exc)) from exc
    if history.space_digest and history.space_digest != space.digest():
        raise DataError(f"{path} was recorded over a different configuration space")
    return history


def _finish(ctx: Context, history, path: Path) -> int:
    report = run_report(history)
    _write_json(path.with_suffix(".report.json"), report.to_json())
    ctx.say(comparison_report([history]).to_text())
    ctx.say(f"history written to {path}")
    return 0


def _run_model_based(ctx, target, space, method, budget, seeds, label, history, resume) -> int:
    path = _history_path(ctx, label)
    writer = HistoryWriter(path, history, resume=True) if history is not None else None
    if writer is None:
        history = RunHistory(ctx.session.session_id, target.objective_kind, label, space_digest=space.digest())
        writer = HistoryWriter(path, history)
    surrogate = "gp" if method == "vbo" else "forest"
    with writer:
        model_based_run(
            target,
            space,
            budget,
            surrogate,
            seeds=seeds,
            history=history,
            on_observation=writer.write,
            interleave_every=0 if method == "vbo" else 4,
            forest_trees=int(ctx.session.budget(method).get("forest_trees", 10)),
        )
    return _finish(ctx, history, path)


def cmd_tune(ctx: Context) -> int:
    a = ctx.args
    space = ctx.space(a.pruned)
    label = a.label or a.method.upper()
    if a.method == "llm":
        if a.seeds:
            raise UsageError("--seeds does not apply to --method llm")
        cfg = ctx.session.budget("llm")
        max_rounds = a.budget if a.budget is not None else int(cfg.get("max_rounds", 30))
        if max_rounds < 1:
            raise UsageError("--budget must be >= 1")
        path = _history_path(ctx, label)
        history = _open_history(ctx, path, space, a.resume)
        fresh = history is None
        if fresh:
            history = RunHistory(ctx.session.session_id, ctx.target.objective_kind, label, space_digest=space.digest())
        with HistoryWriter(path, history, resume=not fresh) as writer:
            llm_tuning_run(
                ctx.target,
                space,
                build_environment(ctx.session),
                ctx.client(),
                max_rounds=max_rounds,
                retries=int(cfg.get("retries", 3)),
                max_consecutive_failures=int(cfg.get("max_consecutive_failures", 5)),
                history=history,
                policy=ctx.session.coercion_policy,
                on_observation=writer.write,
            )
        if not history.successful():
            raise TargetError("no configuration could be evaluated")
        return _finish(ctx, history, path)
    seeds = ctx.seeds(a.seeds, space)
    budget = _budget(ctx, a.method, a.budget, len(seeds))
    history = _open_history(ctx, _history_path(ctx, label), space, a.resume)
    return _run_model_based(ctx, ctx.target, space, a.method, budget, seeds, label, history, a.resume)


# ---------------------------------------------------------------- report / simulate


def cmd_report(args: argparse.Namespace) -> int:
    paths = list(args.histories)
    base = None
    if args.base:
        if args.base in paths:
            base = paths.index(args.base)
        else:
            paths.insert(0, args.base)
            base = 0
    try:
        histories = [read_jsonl(p) for p in paths]
        report = comparison_report(histories, base)
    except HistoryFormatError as exc:
        raise DataError(str(exc)) from exc
    except FileNotFoundError as exc:
        raise DataError(f"{exc.filename}: file not found") from exc
    if args.json:
        sys.stdout.write(_dumps(report.to_json()))
    elif not args.quiet:
        sys.stdout.write(report.to_text())
    if args.output:
        _write_json(Path(args.output), report.to_json())
        Path(args.output).with_suffix(".txt").write_text(report.to_text(), encoding="utf-8")
    return 0


def cmd_simulate(ctx: Context) -> int:
    a = ctx.args
    raw = _read_json(a.config) if a.config else {}
    if not isinstance(raw, dict):
        raise DataError(f"{a.config}: expected a JSON object of knob values")
    checked = coerce_configuration(ctx.catalog, raw, ctx.session.coercion_policy)
    if not checked.ok:
        raise DataError(f"configuration violates the space: {checked.violations}")
    fb = ctx.target.evaluate(checked.config)
    sys.stdout.write(
        _dumps(
            {
                "config": checked.config.to_json(),
                "objective_kind": fb.objective_kind,
                "objective": fb.objective,
                "internal_metrics": dict(fb.internal_metrics),
                "eval_duration_seconds": fb.eval_duration_seconds,
                "coercions": [c.__dict__ for c in checked.log],
            }
        )
    )
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--session", default=argparse.SUPPRESS, help="session configuration JSON file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the session seed")
    common.add_argument("--output-dir", default=argparse.SUPPRESS, help="override the session output directory")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="print nothing on success")

    parser = _Parser(prog="knobforge", description="Database knob tuning with LLM advisors and BO baselines.", parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prune", parents=[common], help="select the k most important knobs")
    p.add_argument("--method", choices=("llm", "shapley"), default="llm")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--samples", type=int, default=200, help="LHS observations for --method shapley")
    p.add_argument("--permutations", type=int, default=500)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--reference", help="reference ranking (JSON list of names or ranking file) to diff against")

    p = sub.add_parser("init", parents=[common], help="sample initial configurations from the LLM")
    p.add_argument("--u", type=int, default=10)
    p.add_argument("--then", choices=("vbo", "smac", "none"), default="none")
    p.add_argument("--budget", type=int, help="iterations for the seeded optimizer")
    p.add_argument("--max-attempts", type=int)
    p.add_argument("--pruned", help="pruned-space JSON to tune within")
    p.add_argument("--history", help="history JSONL path (default under the output directory)")

    p = sub.add_parser("tune", parents=[common], help="run a tuning loop")
    p.add_argument("--method", choices=("vbo", "smac", "llm"), default="vbo")
    p.add_argument("--budget", type=int, help="max iterations (vbo/smac) or rounds (llm)")
    p.add_argument("--seeds", help="seeds JSON written by init")
    p.add_argument("--pruned", help="pruned-space JSON written by prune")
    p.add_argument("--label", help="method label recorded in the history")
    p.add_argument("--history", help="history JSONL path (default under the output directory)")
    p.add_argument("--resume", action="store_true", help="continue an interrupted history")

    p = sub.add_parser("report", parents=[common], help="compare run histories")
    p.add_argument("histories", nargs="+")
    p.add_argument("--base", help="history of the base method; enables PE and Speedup")
    p.add_argument("--json", action="store_true", help="print JSON instead of the text table")
    p.add_argument("--output", help="also write the report to this JSON path (and .txt)")

    p = sub.add_parser("simulate", parents=[common], help="evaluate one configuration and print the feedback")
    p.add_argument("--config", help="JSON object of knob values (default configuration if omitted)")
    return parser


_COMMANDS = {"prune": cmd_prune, "init": cmd_init, "tune": cmd_tune, "simulate": cmd_simulate}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("session", None), ("seed", None), ("output_dir", None), ("quiet", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            return cmd_report(args)
        return _COMMANDS[args.command](Context(args))
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"knobforge: error: {exc}\n")
        return EXIT_USAGE
    except (DataError, MetricsError, InsufficientData) as exc:
        sys.stderr.write(f"knobforge: data error: {exc}\n")
        return EXIT_DATA
    except (SessionError, KnobError) as exc:
        sys.stderr.write(f"knobforge: configuration error: {exc}\n")
        return EXIT_CONFIG
    except (TargetError, OptimizationAborted) as exc:
        sys.stderr.write(f"knobforge: target error: {exc}\n")
        return EXIT_TARGET
    except (LLMError, PruningFailed, RefineFailed) as exc:
        sys.stderr.write(f"knobforge: LLM error: {exc}\n")
        return EXIT_LLM


if __name__ == "__main__":
    sys.exit(main())
