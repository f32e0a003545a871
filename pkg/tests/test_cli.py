"""Command-line interface: subcommands, artifacts, exit codes."""

import json

import pytest

from souschef import load_plan
from souschef.cli import main
from souschef.narrative import parse_curve_tsv
from conftest import DATA


ALMOND_RECIPE = str(DATA / "recipes" / "almond-crescent-cookies.txt")


def test_understand_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["understand", "--recipe", ALMOND_RECIPE,
                 "--out-dir", str(out)])
    assert code == 0
    stdout = capsys.readouterr().out
    assert "closed: yes" in stdout
    for name in ("plan.json", "curve.tsv", "questions.json", "trace.jsonl"):
        assert (out / name).exists(), name
    network = load_plan(out / "plan.json")
    assert len(network.calls) == 23
    rows = parse_curve_tsv((out / "curve.tsv").read_text())
    assert len(rows) == 20
    questions = json.loads((out / "questions.json").read_text())
    assert questions["closure"]["open"] == 0


def test_understand_resolves_bundled_recipe_names(tmp_path):
    code = main(["understand", "--recipe", "vanilla-butter-rounds",
                 "--out-dir", str(tmp_path / "v")])
    assert code == 0


def test_execute_replays_saved_plan(tmp_path, capsys):
    out = tmp_path / "u"
    assert main(["understand", "--recipe", ALMOND_RECIPE,
                 "--out-dir", str(out)]) == 0
    first = capsys.readouterr().out
    final = [ln for ln in first.splitlines()
             if ln.startswith("final-state:")][0]

    replay = tmp_path / "x"
    code = main(["execute", "--plan", str(out / "plan.json"),
                 "--out-dir", str(replay)])
    assert code == 0
    second = capsys.readouterr().out
    assert final in second
    assert (replay / "trace.jsonl").exists()


def test_execute_needs_plan_or_recipe(tmp_path, capsys):
    code = main(["execute", "--out-dir", str(tmp_path / "x")])
    assert code == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "input-error"


def test_execute_summary_trace_level_drops_slot_values(tmp_path, capsys):
    out = tmp_path / "x"
    code = main(["execute", "--recipe", "small-is-not-a-recipe",
                 "--out-dir", str(out)])
    assert code == 1  # unknown recipe path surfaces as an I/O error
    capsys.readouterr()
    code = main(["execute", "--recipe", ALMOND_RECIPE, "--out-dir", str(out),
                 "--trace-level", "summary"])
    assert code == 0
    capsys.readouterr()
    rows = [json.loads(ln)
            for ln in (out / "trace.jsonl").read_text().splitlines()]
    assert all("inputs" not in r for r in rows[1:])


def test_evaluate_against_bundled_gold(tmp_path, capsys):
    out = tmp_path / "e"
    code = main(["evaluate", "--recipe", "almond-crescent-cookies",
                 "--out-dir", str(out)])
    assert code == 0
    stdout = capsys.readouterr().out
    assert "smatch-f1: 1.0" in stdout
    assert "goal-condition-success: 1.0" in stdout
    assert "dish-approximation-score: 1.0" in stdout
    report = json.loads((out / "report.json").read_text())
    assert report["smatch"]["f1"] == 1.0
    assert report["goal-condition-success"]["score"] == 1.0
    assert report["dish-approximation-score"]["score"] == 1.0
    assert report["final-hash"] == report["gold-final-hash"]
    assert report["closure"]["open"] == 0


def test_evaluate_requires_gold_files(tmp_path, capsys):
    recipe = tmp_path / "novel.txt"
    recipe.write_text("# Novel\n## Instructions\nServe.\n")
    code = main(["evaluate", "--recipe", str(recipe),
                 "--out-dir", str(tmp_path / "e")])
    assert code == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "input-error"
    assert "gold plan" in err["message"]


def test_missing_recipe_is_io_error(tmp_path, capsys):
    code = main(["understand", "--recipe", "no-such-file.txt",
                 "--out-dir", str(tmp_path / "o")])
    assert code == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "io-error"


def test_ununderstandable_recipe_exits_two(tmp_path, capsys):
    recipe = tmp_path / "weird.txt"
    recipe.write_text("# Mystery\n## Ingredients\n- 100 g butter\n"
                      "## Instructions\nDefenestrate the butter vigorously.\n")
    code = main(["understand", "--recipe", str(recipe),
                 "--out-dir", str(tmp_path / "o")])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "understanding-failure"
