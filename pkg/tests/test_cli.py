from __future__ import annotations

import json
from pathlib import Path

import pytest

from themekit import dump_dataset, generate_corpus, keyword_map
from themekit.cli import main


@pytest.fixture
def workspace(tmp_path):
    corpus = generate_corpus(12, seed=7)
    dataset_path = tmp_path / "corpus.jsonl"
    dataset_path.write_text(dump_dataset(corpus), encoding="utf-8")
    script_path = tmp_path / "scenario.json"
    script_path.write_text(json.dumps({
        "default": {"mode": "keyword-echo", "keywords": keyword_map(), "k": 3},
    }), encoding="utf-8")
    return tmp_path, dataset_path, script_path


def run_dir_files(run_dir: Path) -> dict[str, bytes]:
    out = {}
    for path in sorted(run_dir.rglob("*")):
        if path.is_file() and path.name != ".lock":
            out[str(path.relative_to(run_dir))] = path.read_bytes()
    return out


def cli(*argv: str) -> int:
    return main(list(argv))


@pytest.fixture
def ingested(workspace):
    tmp_path, dataset_path, script_path = workspace
    run_dir = tmp_path / "runs" / "r1"
    code = cli(
        "ingest", "--dataset", str(dataset_path), "--run-dir", str(run_dir),
        "--question", "What kinds of theft appear?",
    )
    assert code == 0
    return tmp_path, run_dir, script_path


class TestIngest:
    def test_ingest_reports_extrema(self, workspace, capsys):
        tmp_path, dataset_path, _ = workspace
        code = cli("ingest", "--dataset", str(dataset_path), "--run-dir", str(tmp_path / "r"),
                   "--question", "q1")
        assert code == 0
        out = capsys.readouterr().out
        assert "12 data points" in out
        assert "text lengths" in out

    def test_ingest_requires_dataset(self, tmp_path):
        assert cli("ingest", "--run-dir", str(tmp_path / "r")) == 2

    def test_bad_dataset_exits_3(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"id": "a"}\n', encoding="utf-8")
        assert cli("ingest", "--dataset", str(bad), "--run-dir", str(tmp_path / "r")) == 3


class TestDeterminism:
    def test_code_twice_produces_identical_stage_files(self, workspace):
        tmp_path, dataset_path, script_path = workspace
        snapshots = []
        for name in ("a", "b"):
            run_dir = tmp_path / name
            assert cli("ingest", "--dataset", str(dataset_path), "--run-dir", str(run_dir),
                       "--question", "q") == 0
            assert cli("code", "--run-dir", str(run_dir), "--round", "1", "--seed", "7",
                       "--backend", f"scripted:{script_path}") == 0
            snapshots.append((run_dir / "stages" / "coding-r1.jsonl").read_bytes())
        assert snapshots[0] == snapshots[1]


class TestFullPipeline:
    def test_every_stage_and_reports(self, ingested, capsys):
        tmp_path, run_dir, script_path = ingested
        backend = f"scripted:{script_path}"
        assert cli("code", "--run-dir", str(run_dir), "--seed", "7", "--backend", backend) == 0
        assert cli("collate", "--run-dir", str(run_dir), "--seed", "7", "--backend", backend) == 0
        assert cli("merge", "--run-dir", str(run_dir), "--backend", backend) == 0
        # classification refuses before approval
        assert cli("classify", "--run-dir", str(run_dir), "--backend", backend) == 5
        assert cli("approve-themes", "--run-dir", str(run_dir)) == 0
        assert cli("classify", "--run-dir", str(run_dir), "--backend", backend, "--k", "3") == 0
        assert cli("evaluate", "--run-dir", str(run_dir), "--k", "3") == 0
        out = capsys.readouterr().out
        assert "Overall" in out
        eval_dir = run_dir / "eval"
        assert (eval_dir / "r1-recall.json").exists()
        assert (eval_dir / "r1-mapping_flows.csv").exists()
        report = json.loads((eval_dir / "r1-recall.json").read_text(encoding="utf-8"))
        assert report["overall"]["r_at_1"] == 1.0

        export_dir = tmp_path / "export"
        assert cli("export", "--run-dir", str(run_dir), "--out", str(export_dir)) == 0
        assert (export_dir / "codes-r1.jsonl").exists()
        assert (export_dir / "themes-r1.json").exists()
        assert (export_dir / "assignments-r1.jsonl").exists()

    def test_feedback_appends_requirements_and_reruns(self, ingested):
        tmp_path, run_dir, script_path = ingested
        backend = f"scripted:{script_path}"
        assert cli("code", "--run-dir", str(run_dir), "--seed", "7", "--backend", backend) == 0
        assert cli(
            "feedback", "--run-dir", str(run_dir), "--backend", backend, "--seed", "7",
            "--positive", "modus operandi", "--negative", "value of stolen goods",
        ) == 0
        context_lines = (run_dir / "context.jsonl").read_text(encoding="utf-8").splitlines()
        snapshot = json.loads(context_lines[-1])
        assert snapshot["round"] == 2
        assert snapshot["context"]["custom_requirements"] == [
            "focus on: modus operandi",
            "do not encode: value of stolen goods",
        ]
        assert (run_dir / "stages" / "coding-r2.jsonl").exists()

    def test_feedback_no_rerun_and_file(self, ingested):
        tmp_path, run_dir, script_path = ingested
        fb = tmp_path / "fb.json"
        fb.write_text(json.dumps({
            "positive": ["target"],
            "exemplars": ["vehicle theft with forceful entry and disassembly of vehicles"],
        }), encoding="utf-8")
        assert cli("feedback", "--run-dir", str(run_dir), "--file", str(fb), "--no-rerun") == 0
        assert not (run_dir / "stages" / "coding-r2.jsonl").exists()
        snapshot = json.loads((run_dir / "context.jsonl").read_text(encoding="utf-8").splitlines()[-1])
        assert "focus on: target" in snapshot["context"]["custom_requirements"]
        assert snapshot["context"]["positive_exemplars"] == [
            "vehicle theft with forceful entry and disassembly of vehicles"
        ]

    def test_empty_feedback_exits_3(self, ingested):
        _, run_dir, _ = ingested
        assert cli("feedback", "--run-dir", str(run_dir), "--no-rerun") == 3


class TestConfigFile:
    def test_config_file_drives_run_and_flags_override(self, workspace):
        tmp_path, dataset_path, script_path = workspace
        config = tmp_path / "analysis.conf"
        config.write_text(
            "\n".join([
                "[run]",
                f'dataset = "{dataset_path}"',
                f'run_dir = "{tmp_path / "from-config"}"',
                "seed = 3",
                "k = 3",
                "[backend]",
                'kind = "scripted"',
                f'script = "{script_path}"',
                "[generation]",
                "context_limit = 8192",
                "[generation.max_tokens]",
                "coding = 1500",
            ]),
            encoding="utf-8",
        )
        assert cli("ingest", "--config", str(config), "--question", "q") == 0
        assert cli("code", "--config", str(config)) == 0
        assert (tmp_path / "from-config" / "stages" / "coding-r1.jsonl").exists()
        # flag overrides file: different run dir
        other = tmp_path / "flag-wins"
        assert cli("ingest", "--config", str(config), "--run-dir", str(other), "--question", "q") == 0
        assert (other / "manifest.json").exists()

    def test_missing_config_file_exits_2(self, tmp_path):
        assert cli("code", "--config", str(tmp_path / "nope.conf")) == 2

    def test_unknown_backend_kind_exits_2(self, ingested):
        _, run_dir, _ = ingested
        assert cli("code", "--run-dir", str(run_dir), "--backend", "quantum:foo") == 2


class TestErrorPaths:
    def test_missing_run_dir_is_validation_error(self, tmp_path):
        assert cli("code", "--run-dir", str(tmp_path / "nothing")) == 5

    def test_collate_before_code_exits_3(self, ingested):
        _, run_dir, script_path = ingested
        assert cli("collate", "--run-dir", str(run_dir),
                   "--backend", f"scripted:{script_path}") == 3

    def test_backend_error_exit_code(self, ingested, tmp_path):
        _, run_dir, _ = ingested
        empty_script = tmp_path / "empty.json"
        empty_script.write_text("{}", encoding="utf-8")
        assert cli("code", "--run-dir", str(run_dir),
                   "--backend", f"scripted:{empty_script}") == 4
