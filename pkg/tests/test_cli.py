import json

import pytest

from muse.cli import main

PROMPT = "A courier uncovers a conspiracy in the rain"


def _run(tmp_path, *extra):
    return main(["run", PROMPT, "--mock", "--seed", "3",
                 "--runs-dir", str(tmp_path), "--run-id", "r1", *extra])


def test_run_mock_succeeds(tmp_path, capsys):
    assert _run(tmp_path, "--genre", "Thriller") == 0
    out = capsys.readouterr().out
    assert "run r1:" in out
    assert "segment 1:" in out
    manifest = json.loads((tmp_path / "r1" / "manifest.json").read_text())
    assert manifest["seed"] == 3
    assert manifest["script"]["genre"] == "Thriller"


def test_eval_scores_a_finished_run(tmp_path, capsys):
    assert _run(tmp_path) == 0
    capsys.readouterr()
    assert main(["eval", str(tmp_path / "r1")]) == 0
    out = capsys.readouterr().out
    assert "NSR" in out and "CIDS-C" in out and "Clarity" in out
    assert "scores written to" in out
    scores = json.loads((tmp_path / "r1" / "scores.json").read_text())
    assert scores["columns"][0] == "NSR"
    assert set(scores["metrics"]) == set(scores["columns"])


def test_trace_prints_the_decision_log(tmp_path, capsys):
    assert _run(tmp_path) == 0
    capsys.readouterr()
    assert main(["trace", str(tmp_path / "r1")]) == 0
    out = capsys.readouterr().out
    assert "run_started" in out
    assert "run_finished" in out
    assert all(line.startswith("[") for line in out.splitlines() if line)


def test_trace_segment_filter(tmp_path, capsys):
    assert _run(tmp_path) == 0
    capsys.readouterr()
    assert main(["trace", str(tmp_path / "r1"), "--segment", "2"]) == 0
    out = capsys.readouterr().out
    assert "run_started" not in out
    assert "segment_production" in out
    for line in out.splitlines():
        assert '"segment": 2' in line


def test_eval_without_manifest_fails(tmp_path, capsys):
    assert main(["eval", str(tmp_path)]) == 1
    assert "no manifest.json" in capsys.readouterr().err


def test_trace_without_log_fails(tmp_path, capsys):
    assert main(["trace", str(tmp_path)]) == 1
    assert "no trace.jsonl" in capsys.readouterr().err


def test_unknown_style_override_aborts(tmp_path, capsys):
    code = _run(tmp_path, "--style", "claymation")
    assert code == 1
    assert "run aborted:" in capsys.readouterr().err


def test_unknown_genre_rejected_by_parser(tmp_path):
    with pytest.raises(SystemExit):
        _run(tmp_path, "--genre", "Soap Opera")


def test_stubborn_config_degrades_exit_status(tmp_path, capsys):
    config = tmp_path / "muse.toml"
    config.write_text("[mock]\nn_segments = 1\nstubborn = [1]\n")
    code = _run(tmp_path, "--config", str(config))
    assert code == 2
    assert "exhausted" in capsys.readouterr().out


def test_seed_and_run_id_default_from_config(tmp_path, capsys):
    config = tmp_path / "muse.toml"
    config.write_text("[mock]\nseed = 4\nn_segments = 1\n")
    code = main(["run", PROMPT, "--mock", "--config", str(config),
                 "--runs-dir", str(tmp_path)])
    assert code == 0
    capsys.readouterr()
    run_dirs = [p for p in tmp_path.iterdir()
                if p.is_dir() and p.name.startswith("run-")]
    assert len(run_dirs) == 1
    manifest = json.loads((run_dirs[0] / "manifest.json").read_text())
    assert manifest["seed"] == 4
