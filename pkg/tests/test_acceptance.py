"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line with its timing."""

import json
import math
import time

import numpy as np
import pytest

from knobforge.advisor.mock import mock_llm
from knobforge.advisor.parsing import ParseFailure, parse_config_response
from knobforge.advisor.prompts import EnvironmentInfo
from knobforge.advisor.tasks import RefineFailed, llm_refine_step, llm_sample_initial_configs
from knobforge.cli import main
from knobforge.knobspace import INTEGER, ConfigurationSpace, Knob
from knobforge.metrics import comparison_report, compute_odp, compute_pe, compute_speedup, compute_tes, read_jsonl
from knobforge.optimize import TunerBudget, llm_tuning_run, smac_run, vbo_run
from knobforge.optimize.acquisition import expected_improvement
from knobforge.optimize.gp import log_marginal_likelihood
from knobforge.optimize.lhs import lhs_unit
from knobforge.pruning import collect_observations, pruning_report, shapley_importance
from knobforge.scenarios import planted_target
from knobforge.target import THROUGHPUT, Feedback

pytestmark = pytest.mark.acceptance

ENV = EnvironmentInfo("MySQL", "8.0.36", 8, 16 * 2**30, "OLTP", 0.7)
SHAPES = ("quadratic", "saturating", "step")


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail, started, limit):
        elapsed = time.perf_counter() - started
        ok = ok and elapsed < limit
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail} [{elapsed:.2f}s, limit {limit:g}s]")
        assert ok, detail

    return emit


# ---------------------------------------------------------------- 1. metric formulas

BASE_ODP, BASE_TES = 154.73, 316
DDPG_TES = 99
# (row, ODP, printed PE %, TES, printed Speedup %); None marks a value the columns cannot produce
TABLE3 = [
    ("VBO + Mapping", 154.37, -0.23, 279, 11.71),
    ("RGPE + Model Ensemble", 158.02, None, 215, None),
    ("DS-DDPG + Pre-training", 162.15, None, 313, -216.16),
    ("VBO + GPT-3.5", 127.68, -17.48, 176, 44.30),
    ("VBO + GPT-4-Turbo", 152.01, None, 84, 73.41),
    ("VBO + GPT-4o", 126.65, None, 90, 71.51),
    ("VBO + Claude-3-Opus", 126.09, None, 2, 99.37),
    ("VBO + Llama3-8B-Instruct", 153.16, None, 90, 71.51),
    ("VBO + Llama3-70B-Instruct", 154.68, -0.03, 90, 71.51),
    ("VBO + Qwen2-7B", 153.58, -0.74, 100, 68.35),
]
# printed values that disagree with their own row's ODP/TES under any single base
TABLE3_INCONSISTENT = [
    ("RGPE + Model Ensemble", "pe", 158.02, 0.42),
    ("RGPE + Model Ensemble", "speedup", 215, 42.67),
    ("DS-DDPG + Pre-training", "pe", 162.15, 33.10),
    ("VBO + GPT-4-Turbo", "pe", 152.01, -1.93),
    ("VBO + GPT-4o", "pe", 126.65, -18.29),
    ("VBO + Claude-3-Opus", "pe", 126.09, -18.65),
    ("VBO + Llama3-8B-Instruct", "pe", 153.16, -1.19),
]


def test_criterion_1_metric_formula_fidelity(verdict):
    started = time.perf_counter()
    checked, misses = 0, []
    for row, odp, pe, tes, speedup in TABLE3:
        base_tes = DDPG_TES if row.startswith("DS-DDPG") else BASE_TES
        if pe is not None:
            got = 100 * compute_pe(BASE_ODP, odp)
            checked += 1
            if abs(got - pe) > 0.02:
                misses.append(f"{row} PE {got:.2f} vs {pe}")
        if speedup is not None:
            got = 100 * compute_speedup(base_tes, tes)
            checked += 1
            if abs(got - speedup) > 0.02:
                misses.append(f"{row} Speedup {got:.2f} vs {speedup}")
    spot = [
        round(100 * compute_speedup(316, 279), 2) == 11.71,
        round(100 * compute_speedup(316, 84), 2) == 73.42,
        round(100 * compute_speedup(316, 2), 2) == 99.37,
        round(100 * compute_pe(154.73, 154.37), 2) == -0.23,
        round(100 * compute_speedup(99, 313), 2) == -216.16,
    ]
    ok = not misses and all(spot) and checked == 13
    detail = f"{checked - len(misses)}/{checked} derivable percentages within 0.02pp; {len(TABLE3_INCONSISTENT)} printed values inconsistent with their columns (tracked separately)"
    verdict(1, ok, detail + (f"; misses: {misses}" if misses else ""), started, 1.0)


@pytest.mark.xfail(strict=True, reason="printed values disagree with the row's own ODP/TES columns")
@pytest.mark.parametrize("row,kind,value,printed", TABLE3_INCONSISTENT, ids=[f"{r}-{k}" for r, k, _, _ in TABLE3_INCONSISTENT])
def test_criterion_1_inconsistent_printed_values(row, kind, value, printed):
    base_odp = 120.71 if row.startswith("DS-DDPG") else BASE_ODP
    got = 100 * (compute_pe(base_odp, value) if kind == "pe" else compute_speedup(BASE_TES, value))
    assert abs(got - printed) <= 0.02


# ---------------------------------------------------------------- 2. optimizer convergence


def test_criterion_2_optimizer_oracle_convergence(verdict):
    started = time.perf_counter()
    hits = {"vbo": 0, "smac": 0}
    for seed in range(10):
        for name, runner, budget in (("vbo", vbo_run, 60), ("smac", smac_run, 80)):
            t = planted_target(10, 3, seed=seed, shapes=SHAPES)
            _, best = t.optimum()
            h = runner(t, t.space, TunerBudget(budget, 10, seed))
            hits[name] += compute_odp(h) >= 0.95 * best
    ok = hits["vbo"] >= 9 and hits["smac"] >= 9
    verdict(2, ok, f"VBO within 5% in {hits['vbo']}/10 seeds, SMAC in {hits['smac']}/10", started, 120.0)


# ---------------------------------------------------------------- 3. initialization speedup


def test_criterion_3_initialization_speedup(verdict):
    started = time.perf_counter()
    speedups, pes = [], []
    for seed in range(5):
        base_t = planted_target(10, 3, seed=seed, shapes=SHAPES)
        base = vbo_run(base_t, base_t.space, TunerBudget(60, 10, seed))
        t = planted_target(10, 3, seed=seed, shapes=SHAPES)
        default_fb = t.evaluate(t.space.default_configuration())
        sampled = llm_sample_initial_configs(mock_llm("hill_climb", target=t, seed=seed), t.space, ENV, default_fb, 10)
        seeded = vbo_run(t, t.space, TunerBudget(60, 10, seed), seeds=sampled.configs, method_label="VBO+LLM-init")
        speedups.append(compute_speedup(compute_tes(base), compute_tes(seeded)))
        pes.append(compute_pe(compute_odp(base), compute_odp(seeded)))
    mean_speedup = float(np.mean(speedups))
    worst_pe = max(abs(p) for p in pes)
    ok = mean_speedup >= 0.5 and worst_pe <= 0.05
    verdict(3, ok, f"mean Speedup {mean_speedup:.3f} over 5 seeds, max |PE| {worst_pe:.4f}", started, 180.0)


# ---------------------------------------------------------------- 4. LLM loop efficiency


def test_criterion_4_llm_loop_efficiency(verdict):
    started = time.perf_counter()
    t = planted_target(10, 3, seed=0, shapes=SHAPES)
    _, best = t.optimum()
    h = llm_tuning_run(t, t.space, ENV, mock_llm("hill_climb", target=t), max_rounds=30)
    odp, tes = compute_odp(h), compute_tes(h)
    curve = h.best_so_far()
    monotone = all(a <= b for a, b in zip(curve, curve[1:]))
    ok = odp >= 0.98 * best and tes <= 15 and len(h) <= 31 and monotone
    verdict(4, ok, f"ODP {odp:.2f} vs optimum {best:.2f}, TES {tes}, {len(h) - 1} rounds, monotone={monotone}", started, 30.0)


# ---------------------------------------------------------------- 5. pruning recovery


def test_criterion_5_pruning_recovery(verdict, selection_fixture):
    started = time.perf_counter()
    exact = 0
    for seed in range(10):
        t = planted_target(20, 3, seed=seed)
        obs = collect_observations(t, t.space, 200, seed=seed).observations
        ranking = shapley_importance(obs, t.space, permutations_count=500, seed=seed)
        exact += set(ranking.top(3)) == set(t.spec.names)
    expert, llm, _ = selection_fixture
    row = pruning_report([llm], expert, 10).rows[0]
    table_ok = (
        row.overlap == 7
        and set(row.only_in_ranking) == {"join_buffer_size", "innodb_io_capacity", "thread_cache_size"}
        and set(row.only_in_reference) == {"sort_buffer_size", "max_connections", "key_buffer_size"}
    )
    ok = exact >= 9 and table_ok
    verdict(5, ok, f"planted top-3 recovered in {exact}/10 seeds; expert vs LLM overlap {row.overlap}/10, differences match={table_ok}", started, 60.0)


# ---------------------------------------------------------------- 6. parser robustness


def test_criterion_6_parser_robustness(verdict):
    started = time.perf_counter()
    space = ConfigurationSpace([Knob("pct", INTEGER, 5, 0, 100), Knob("threads", INTEGER, 4, 0, 64)])
    parsed = parse_config_response(space, '{"pct": 7.5, "threads": -3}')
    rounded = parsed.config["pct"] == 8 and any(c.knob == "pct" and c.reason == "rounded" for c in parsed.log)
    clamped = parsed.config["threads"] == 0 and any(c.knob == "threads" and c.reason == "clamped" for c in parsed.log)

    try:
        parse_config_response(space, "I would raise the buffer pool.")
        no_json = False
    except ParseFailure:
        no_json = True
    retry_mock = mock_llm("scripted", replies=["no json here", '{"pct": 50}'])
    current = space.default_configuration()
    fb = Feedback(THROUGHPUT, 100.0)
    step = llm_refine_step(retry_mock, space, ENV, current, fb)
    retried = step.config["pct"] == 50 and len(retry_mock.calls) == 2
    try:
        llm_refine_step(mock_llm("malformed"), space, ENV, current, fb, retries=0)
        gives_up = False
    except RefineFailed:
        gives_up = True

    t = planted_target(6, 2, seed=0)
    looping = mock_llm("malformed")
    h = llm_tuning_run(t, t.space, ENV, looping, max_rounds=30, retries=1, max_consecutive_failures=5)
    terminated = len(h) == 1 and len(looping.calls) == 5 * 2
    ok = rounded and clamped and no_json and retried and gives_up and terminated
    detail = f"7.5->8 logged={rounded}, -3->0 logged={clamped}, no-JSON parse_failure={no_json}, retry recovers={retried}, 5 failures end loop={terminated}"
    verdict(6, ok, detail, started, 1.0)


# ---------------------------------------------------------------- 7. determinism and persistence


def test_criterion_7_determinism_and_persistence(verdict, session_dir, tmp_path, capsys):
    started = time.perf_counter()
    session = str(session_dir / "session.json")
    outs = [tmp_path / "a", tmp_path / "b"]
    codes = [main(["tune", "--session", session, "--method", "smac", "--budget", "40", "--output-dir", str(o), "--quiet"]) for o in outs]
    codes += [main(["tune", "--session", session, "--method", "llm", "--budget", "10", "--output-dir", str(o), "--quiet"]) for o in outs]
    identical = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in ("t-smac.jsonl", "t-llm.jsonl"))

    capsys.readouterr()
    paths = [str(outs[0] / "t-smac.jsonl"), str(outs[0] / "t-llm.jsonl")]
    codes.append(main(["report", *paths, "--json"]))
    reported = json.loads(capsys.readouterr().out)
    direct = comparison_report([read_jsonl(p) for p in paths]).to_json()
    round_trip = reported == direct and [r["method_label"] for r in reported["rows"]] == ["SMAC", "LLM"]
    ok = codes == [0] * 5 and identical and round_trip
    verdict(7, ok, f"byte-identical histories={identical}, report round-trip={round_trip}", started, 30.0)


# ---------------------------------------------------------------- 8. numerical soundness


def test_criterion_8_numerical_soundness(verdict):
    started = time.perf_counter()
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(1, 4))
        X = rng.random((3, d))
        y = rng.normal(size=3)
        theta = np.concatenate([rng.uniform(np.log(0.1), np.log(2.0), d), [rng.uniform(-1, 1), rng.uniform(np.log(1e-3), np.log(0.3))]])
        _, grad = log_marginal_likelihood(theta, X, y)
        h = 1e-6
        for i, e in enumerate(np.eye(len(theta))):
            fd = (log_marginal_likelihood(theta + h * e, X, y, False) - log_marginal_likelihood(theta - h * e, X, y, False)) / (2 * h)
            worst = max(worst, abs(grad[i] - fd) / max(abs(fd), 1e-3))
    ei_zero = expected_improvement(1.5, 0.0, 1.5) == 0.0
    ei_unit = abs(expected_improvement(1.5, 1.0, 1.5) - 1 / math.sqrt(2 * math.pi)) <= 1e-9
    strata = True
    for n in (4, 100, 6000):
        U = lhs_unit(n, 5, rng)
        strata &= all(np.array_equal(np.sort(np.floor(col * n).astype(int)), np.arange(n)) for col in U.T)
    ok = worst <= 1e-4 and ei_zero and ei_unit and strata
    detail = f"max relative gradient error {worst:.2e}, EI(var=0)=0 {ei_zero}, EI(sd=1)=1/sqrt(2pi) {ei_unit}, LHS strata {strata}"
    verdict(8, ok, detail, started, 60.0)
