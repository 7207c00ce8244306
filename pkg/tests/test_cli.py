import json
import subprocess
import sys

import pytest

from knobforge.cli import EXIT_CONFIG, EXIT_DATA, EXIT_LLM, EXIT_TARGET, EXIT_USAGE, main
from knobforge.metrics import read_jsonl, write_jsonl
from knobforge.session import SessionError, build_catalog, build_client, build_target, interpolate, load_session


def run(session_dir, *argv):
    return main([*argv, "--session", str(session_dir / "session.json"), "--quiet"])


def edit_session(session_dir, **changes):
    path = session_dir / "session.json"
    data = json.loads(path.read_text())
    data.update(changes)
    path.write_text(json.dumps(data))


# ---------------------------------------------------------------- session


def test_interpolate():
    env = {"KEY": "abc", "HOST": "db1"}
    assert interpolate({"a": ["${KEY}", {"b": "x-${HOST}-y"}], "n": 3}, env) == {"a": ["abc", {"b": "x-db1-y"}], "n": 3}
    with pytest.raises(SessionError):
        interpolate("${MISSING}", env)


def test_load_session_resolves_paths(session_dir, monkeypatch):
    s = load_session(session_dir / "session.json")
    assert s.catalog_path == session_dir / "catalog.json"
    assert s.output_dir == session_dir / "runs"
    assert s.seed == 3 and s.session_id == "t"
    target = build_target(s, build_catalog(s))
    assert target.objective_kind == "throughput_tps"
    monkeypatch.setenv("KF_CATALOG", "catalog.json")
    edit_session(session_dir, catalog="${KF_CATALOG}")
    assert load_session(session_dir / "session.json").catalog_path == session_dir / "catalog.json"


@pytest.mark.parametrize(
    "changes",
    [
        {"catalog": "missing.json"},
        {"target": {}},
        {"target": {"simulator": "nope.json"}},
        {"objective_kind": "qps"},
        {"coercion_policy": "guess"},
    ],
)
def test_load_session_errors(session_dir, changes):
    edit_session(session_dir, **changes)
    with pytest.raises(SessionError):
        load_session(session_dir / "session.json")


def test_build_client_variants(session_dir):
    s = load_session(session_dir / "session.json")
    s.llm = {"mock": "telepathy"}
    with pytest.raises(SessionError):
        build_client(s)
    s.llm = {"mock": "hill_climb"}
    with pytest.raises(SessionError):
        build_client(s, target=None)
    s.llm = {"base_url": "http://localhost:1"}
    with pytest.raises(SessionError):
        build_client(s)
    s.llm = {"base_url": "http://localhost:1", "model": "m"}
    assert build_client(s).model == "m"


# ---------------------------------------------------------------- subcommands


def test_simulate_prints_feedback(session_dir, capsys):
    assert run(session_dir, "simulate") == 0
    out = json.loads(capsys.readouterr().out)
    assert out["objective_kind"] == "throughput_tps" and out["objective"] > 0
    cfg = session_dir / "cfg.json"
    cfg.write_text(json.dumps({"knob_00": 10**9}))
    assert run(session_dir, "simulate", "--config", str(cfg)) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["coercions"][0]["reason"] == "clamped"


def test_prune_llm_and_shapley(session_dir):
    assert run(session_dir, "prune", "--k", "3") == 0
    pruned = json.loads((session_dir / "runs" / "pruned.json").read_text())
    surface = json.loads((session_dir / "surface.json").read_text())
    planted = {k["name"] for k in surface["important_knobs"]}
    assert set(pruned["selected"]) == planted
    ref = session_dir / "ref.json"
    ref.write_text(json.dumps(sorted(planted)))
    assert run(session_dir, "prune", "--method", "shapley", "--k", "3", "--samples", "200", "--permutations", "200", "--reference", str(ref)) == 0
    report = json.loads((session_dir / "runs" / "pruning_report.json").read_text())
    assert report["rows"][0]["overlap"] == 3
    assert (session_dir / "runs" / "ranking.json").exists()
    assert "overlap 3/3" in (session_dir / "runs" / "pruning_report.txt").read_text()


def test_prune_bad_k_is_usage_error(session_dir, capsys):
    assert run(session_dir, "prune", "--k", "0") == EXIT_USAGE
    assert run(session_dir, "prune", "--k", "11") == EXIT_USAGE
    assert "--k" in capsys.readouterr().err


def test_tune_vbo_then_report(session_dir, capsys):
    assert run(session_dir, "tune", "--method", "vbo", "--budget", "12") == 0
    path = session_dir / "runs" / "t-vbo.jsonl"
    h = read_jsonl(path)
    assert len(h) == 13 and h.method_label == "VBO"
    copy = session_dir / "copy.jsonl"
    write_jsonl(h, copy)
    assert copy.read_bytes() == path.read_bytes()
    assert json.loads(path.with_suffix(".report.json").read_text())["tes"] >= 0
    capsys.readouterr()
    assert main(["report", str(path), "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["rows"][0]["method_label"] == "VBO"


def test_tune_is_deterministic_per_seed(session_dir, tmp_path):
    assert run(session_dir, "tune", "--method", "smac", "--budget", "10") == 0
    first = (session_dir / "runs" / "t-smac.jsonl").read_bytes()
    assert run(session_dir, "tune", "--method", "smac", "--budget", "10", "--output-dir", str(tmp_path)) == 0
    assert (tmp_path / "t-smac.jsonl").read_bytes() == first


def test_tune_llm_and_resume(session_dir):
    assert run(session_dir, "tune", "--method", "llm", "--budget", "3") == 0
    path = session_dir / "runs" / "t-llm.jsonl"
    assert len(read_jsonl(path)) == 4
    assert run(session_dir, "tune", "--method", "llm", "--budget", "6", "--resume") == 0
    h = read_jsonl(path)
    assert [o.iteration for o in h.observations] == list(range(7))


def test_tune_vbo_resume_continues_iterations(session_dir):
    assert run(session_dir, "tune", "--method", "vbo", "--budget", "8") == 0
    assert run(session_dir, "tune", "--method", "vbo", "--budget", "11", "--resume") == 0
    h = read_jsonl(session_dir / "runs" / "t-vbo.jsonl")
    assert [o.iteration for o in h.observations] == list(range(12))


def test_init_then_vbo_and_comparison(session_dir, capsys):
    assert run(session_dir, "init", "--u", "4", "--then", "vbo", "--budget", "10") == 0
    seeds = json.loads((session_dir / "runs" / "seeds.json").read_text())
    assert len(seeds["configs"]) == 4 and seeds["exhausted"] is False
    seeded = session_dir / "runs" / "t-vbo+llm-init.jsonl"
    assert read_jsonl(seeded).method_label == "VBO+LLM-init"
    assert run(session_dir, "tune", "--method", "vbo", "--budget", "10") == 0
    capsys.readouterr()
    assert main(["report", str(seeded), "--base", str(session_dir / "runs" / "t-vbo.jsonl")]) == 0
    text = capsys.readouterr().out
    assert "Speedup" in text and "VBO+LLM-init" in text


def test_init_exhaustion_warns(session_dir, capsys):
    edit_session(session_dir, llm={"mock": "scripted", "replies": ["{}"] * 6})
    assert run(session_dir, "init", "--u", "3", "--max-attempts", "6") == 0
    seeds = json.loads((session_dir / "runs" / "seeds.json").read_text())
    assert seeds["exhausted"] is True and len(seeds["configs"]) == 1
    assert "warning" in capsys.readouterr().err


def test_tune_with_seeds_and_pruned(session_dir):
    assert run(session_dir, "prune", "--k", "3") == 0
    assert run(session_dir, "init", "--u", "2", "--pruned", str(session_dir / "runs" / "pruned.json")) == 0
    rc = run(
        session_dir,
        "tune",
        "--method",
        "vbo",
        "--budget",
        "8",
        "--seeds",
        str(session_dir / "runs" / "seeds.json"),
        "--pruned",
        str(session_dir / "runs" / "pruned.json"),
        "--label",
        "Pruned",
    )
    assert rc == 0
    h = read_jsonl(session_dir / "runs" / "t-pruned.jsonl")
    assert len(h) == 9


def test_exit_codes(session_dir, tmp_path, capsys):
    assert main(["tune"]) == EXIT_USAGE
    with pytest.raises(SystemExit) as err:
        main(["tune", "--method", "annealing"])
    assert err.value.code == EXIT_USAGE
    assert main(["tune", "--session", str(tmp_path / "nope.json")]) == EXIT_CONFIG

    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"session_id": "s", "method_label": "M", "objective_kind": "throughput_tps"}\n{oops\n')
    assert main(["report", str(bad)]) == EXIT_DATA
    assert "bad.jsonl:2" in capsys.readouterr().err

    edit_session(session_dir, llm={"mock": "malformed"})
    assert run(session_dir, "prune", "--k", "3") == EXIT_LLM

    edit_session(session_dir, target={"external": {"restart": "exit 1", "benchmark": "echo 'tps: 1.0'"}}, llm={"mock": "echo"})
    assert run(session_dir, "init", "--u", "1") == EXIT_TARGET


def test_global_flags_before_subcommand(session_dir, tmp_path):
    rc = main(["--session", str(session_dir / "session.json"), "--quiet", "--output-dir", str(tmp_path), "tune", "--method", "vbo", "--budget", "3"])
    assert rc == 0
    assert (tmp_path / "t-vbo.jsonl").exists()


def test_console_entry_point(session_dir):
    proc = subprocess.run(
        [sys.executable, "-m", "knobforge.cli", "simulate", "--session", str(session_dir / "session.json")],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["objective"] > 0
