from __future__ import annotations

import filecmp
import json
import re
import shutil
from fractions import Fraction

import pytest

from restamp.cli import main
from restamp.reporting import percent_half_up
from restamp.runner import InteractionLog
from restamp.triage import LABELS, TITLES

from conftest import FIXTURES, GOLDEN

MODES = {"S1": "single", "M1": "multi", "M2": "multi"}


def _amplify_args(name: str, out) -> list[str]:
    return [
        "amplify",
        "--spec", str(FIXTURES / "minipet.json"),
        "--seed", str(FIXTURES / "seed_suite.json"),
        "--mode", MODES[name],
        "--target", "demo",
        "--faults", "login-200",
        "--gateway", "replay",
        "--transcript", str(FIXTURES / "transcripts" / f"{name}.jsonl"),
        "--out", str(out),
    ]


def _tree_diff(a, b) -> list[str]:
    cmp = filecmp.dircmp(a, b)
    out = cmp.left_only + cmp.right_only + cmp.diff_files
    # dircmp's shallow compare trusts stat; recheck contents byte for byte
    for name in cmp.same_files:
        if (a / name).read_bytes() != (b / name).read_bytes():
            out.append(name)
    return out


@pytest.fixture(scope="module")
def replay_trees(tmp_path_factory):
    root = tmp_path_factory.mktemp("trees")
    for name in MODES:
        assert main(_amplify_args(name, root / name)) == 0
    return root


@pytest.mark.parametrize("name", list(MODES))
def test_replay_matches_golden(replay_trees, name):
    assert _tree_diff(replay_trees / name, GOLDEN / name) == []
    assert not (replay_trees / name / "timings.json").exists()


def test_second_run_is_byte_identical(replay_trees, tmp_path):
    assert main(_amplify_args("M2", tmp_path / "again")) == 0
    assert _tree_diff(replay_trees / "M2", tmp_path / "again") == []


def test_missing_spec(tmp_path, capsys):
    args = _amplify_args("S1", tmp_path / "o")
    args[args.index("--spec") + 1] = str(tmp_path / "nope.json")
    assert main(args) == 2
    assert "spec file not found" in capsys.readouterr().err


def test_record_without_key(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("OPENAI_API_KEY", raising=False)
    args = _amplify_args("S1", tmp_path / "o")
    args[args.index("--gateway") + 1] = "record"
    args[args.index("--transcript") + 1] = str(tmp_path / "rec.jsonl")
    assert main(args) == 2
    assert "configuration error" in capsys.readouterr().err


def test_unknown_fault(tmp_path, capsys):
    args = _amplify_args("S1", tmp_path / "o")
    args[args.index("--faults") + 1] = "meltdown"
    assert main(args) == 2
    assert "unknown faults" in capsys.readouterr().err


def test_strict_replay_miss_is_a_warning_not_a_crash(tmp_path, capsys):
    # M1 answers do not match single-agent prompts: every endpoint aborts
    args = _amplify_args("S1", tmp_path / "o")
    args[args.index("--transcript") + 1] = str(FIXTURES / "transcripts" / "M1.jsonl")
    assert main(args) == 0
    assert capsys.readouterr().err.count("ReplayMissError") == 3
    suite = json.loads((tmp_path / "o" / "suite.json").read_text())
    assert [c["name"] for c in suite["cases"]] == ["testListAvailablePets"]


class TestCoverageCommand:
    def test_empty_log(self, tmp_path, capsys):
        log = tmp_path / "empty.jsonl"
        InteractionLog("t").write(log)
        assert main(["coverage", "--spec", str(FIXTURES / "minipet.json"), str(log)]) == 0
        out = capsys.readouterr().out
        rows = re.findall(r"^(\w[\w ]*?)\s+\| (\d+)% \((\d+)/(\d+)\)$", out, re.MULTILINE)
        assert len(rows) == 7
        assert all(pct == "0" and covered == "0" for _, pct, covered, _ in rows)
        assert ("Path", "0", "0", "3") in rows

    def test_split_logs_equal_whole(self, replay_trees, tmp_path, capsys):
        whole = replay_trees / "M1" / "interactions.jsonl"
        log = InteractionLog.read(whole)
        half = len(log.records) // 2
        InteractionLog(log.target, log.records[:half]).write(tmp_path / "a.jsonl")
        InteractionLog(log.target, log.records[half:]).write(tmp_path / "b.jsonl")
        spec = str(FIXTURES / "minipet.json")
        main(["coverage", "--spec", spec, str(whole)])
        one = capsys.readouterr().out
        main(["coverage", "--spec", spec, str(tmp_path / "a.jsonl"), str(tmp_path / "b.jsonl")])
        assert capsys.readouterr().out == one

    def test_missing_log(self, tmp_path, capsys):
        assert main(["coverage", "--spec", str(FIXTURES / "minipet.json"), str(tmp_path / "x.jsonl")]) == 2


class TestRunCommand:
    def test_seed_passes(self, tmp_path, capsys):
        code = main(
            ["run", "--suite", str(FIXTURES / "seed_suite.json"), "--spec", str(FIXTURES / "minipet.json"),
             "--target", "demo", "--out", str(tmp_path)]
        )
        assert code == 0
        assert "PASS testListAvailablePets" in capsys.readouterr().out
        assert InteractionLog.read(tmp_path / "interactions.jsonl").target == "demo-target"

    def test_login_bug_fails_run(self, replay_trees, capsys):
        suite = str(replay_trees / "S1" / "suite.json")
        assert main(["run", "--suite", suite, "--target", "demo", "--faults", "login-200"]) == 1
        assert "FAIL testLoginWithInvalidPassword" in capsys.readouterr().out
        assert main(["run", "--suite", suite, "--target", "demo"]) == 0

    def test_faults_need_demo(self, capsys):
        args = ["run", "--suite", str(FIXTURES / "seed_suite.json"), "--target", "http://127.0.0.1:9", "--faults", "login-200"]
        assert main(args) == 2


class TestTriageCommand:
    def _args(self, tree):
        return [
            "triage",
            "--report", str(tree / "execution_report.json"),
            "--suite", str(tree / "suite.json"),
            "--spec", str(FIXTURES / "minipet.json"),
        ]

    def test_matches_written_labels(self, replay_trees, tmp_path, capsys):
        tree = replay_trees / "M2"
        assert main(self._args(tree) + ["--out", str(tmp_path / "t.json")]) == 0
        assert (tmp_path / "t.json").read_text() == (tree / "triage.json").read_text()
        assert "testLoginWithInvalidPassword: bug_exposed" in capsys.readouterr().out

    def test_override(self, replay_trees, tmp_path, capsys):
        overrides = tmp_path / "o.json"
        overrides.write_text(json.dumps({"testLoginWithInvalidPassword": "missing_information"}))
        assert main(self._args(replay_trees / "M2") + ["--overrides", str(overrides)]) == 0
        assert "testLoginWithInvalidPassword: missing_information [override]" in capsys.readouterr().out

    def test_unknown_override_case(self, replay_trees, tmp_path):
        overrides = tmp_path / "o.json"
        overrides.write_text(json.dumps({"testNope": "bug_exposed"}))
        assert main(self._args(replay_trees / "M2") + ["--overrides", str(overrides)]) == 2


class TestReportCommand:
    def _json(self, capsys, *dirs) -> dict:
        assert main(["report", "--json", *map(str, dirs)]) == 0
        return json.loads(capsys.readouterr().out)

    def test_failed_equals_sum_of_categories(self, replay_trees, capsys):
        report = self._json(capsys, replay_trees / "S1", replay_trees / "M1")
        t1, t2 = report["test_statistics"], report["failed_test_categories"]
        for col in report["columns"]:
            failed = t2["Failed Tests"][col]["count"]
            assert failed == sum(t2[TITLES[label]][col]["count"] for label in LABELS)
            assert failed == t1["Failed Tests"][col]["count"]
            assert t1["Successful Tests"][col]["count"] + failed == t1["Generated Tests"][col]["count"]

    def test_percentages_recompute(self, replay_trees, capsys):
        report = self._json(capsys, replay_trees / "S1", replay_trees / "M1", replay_trees / "M2")
        t1 = report["test_statistics"]
        for col in report["columns"]:
            generated = Fraction(str(t1["Generated Tests"][col]["count"]))
            for row in ("Successful Tests", "Failed Tests", "Bug-exposing Tests"):
                cell = t1[row][col]
                assert cell["percent"] == percent_half_up(Fraction(str(cell["count"])), generated)
        for row, cells in report["coverage"].items():
            for cell in cells.values():
                assert cell["percent"] == percent_half_up(Fraction(str(cell["covered"])), Fraction(str(cell["total"])))
        assert report["coverage"]["Path"]["Multi-Agent"]["percent"] == 100

    def test_same_mode_runs_are_averaged(self, replay_trees, capsys):
        report = self._json(capsys, replay_trees / "M1", replay_trees / "M2")
        assert report["runs"] == {"Multi-Agent": 2}
        assert report["columns"] == ["Multi-Agent"]

    def test_text_layout(self, replay_trees, capsys):
        assert main(["report", str(replay_trees / "S1"), str(replay_trees / "M1")]) == 0
        out = capsys.readouterr().out
        for heading in ("Test Execution Statistics", "Categorization of Failed Tests", "Structural API Coverage", "LLM Usage Statistics"):
            assert heading in out
        for row in ("Bug-exposing Tests", "Time (s)", "Tokens", "Cost of Usage ($)", "Energy Usage (Wh)"):
            assert row in out

    def test_empty_dir(self, tmp_path, capsys):
        assert main(["report", str(tmp_path)]) == 2
        assert "not an amplification output directory" in capsys.readouterr().err

    def test_incomplete_dir(self, replay_trees, tmp_path, capsys):
        partial = tmp_path / "partial"
        shutil.copytree(replay_trees / "S1", partial)
        (partial / "triage.json").unlink()
        assert main(["report", str(partial)]) == 2
        assert "triage.json" in capsys.readouterr().err


def test_record_fixtures_reproduces_bundled_transcripts(tmp_path, capsys):
    assert main(["record-fixtures", "--out", str(tmp_path)]) == 0
    for name in MODES:
        assert (tmp_path / f"{name}.jsonl").read_bytes() == (FIXTURES / "transcripts" / f"{name}.jsonl").read_bytes()
