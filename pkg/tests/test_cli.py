import json

import pytest

from langrepo.cli import main
from langrepo.repository import load as load_repo

from conftest import make_caption_set, write_caption_file


@pytest.fixture
def config_path(tmp_path):
    cfg = {
        "llm": {"kind": "mock"},
        "embed": {"kind": "hashed", "dimension": 16},
        "build": {"chunk_schedule": [3, 2]},
        "parallelism": 1,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture
def captions_path(tmp_path):
    return write_caption_file(tmp_path / "vid.json", make_caption_set(12))


def build_repo(tmp_path, config_path, captions_path):
    out = tmp_path / "repo.json"
    code = main(
        ["build", "--captions", str(captions_path), "--config", str(config_path), "--out", str(out)]
    )
    assert code == 0
    return out


class TestBuildCommand:
    def test_build_writes_repo(self, tmp_path, config_path, captions_path, capsys):
        out = build_repo(tmp_path, config_path, captions_path)
        repo = load_repo(out)
        assert [len(s) for s in repo.scales] == [3, 2]
        printed = capsys.readouterr().out
        assert "scale 0" in printed and "llm calls" in printed

    def test_bad_schedule_exits_2(self, tmp_path, captions_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"build": {"chunk_schedule": [2, 3]}}))
        code = main(
            ["build", "--captions", str(captions_path), "--config", str(bad), "--out", str(tmp_path / "r.json")]
        )
        assert code == 2

    def test_missing_captions_exits_2(self, tmp_path, config_path):
        code = main(
            ["build", "--captions", str(tmp_path / "nope.json"), "--config", str(config_path), "--out", str(tmp_path / "r.json")]
        )
        assert code == 2

    def test_rebuild_with_cache_issues_no_calls(self, tmp_path, config_path, captions_path, capsys):
        cache = tmp_path / "cache"
        args = [
            "build",
            "--captions", str(captions_path),
            "--config", str(config_path),
            "--out", str(tmp_path / "repo.json"),
            "--cache-dir", str(cache),
        ]
        assert main(args) == 0
        capsys.readouterr()
        assert main(args) == 0
        second = capsys.readouterr().out
        assert "rephrase=0" in second


class TestAnswerCommand:
    def test_answer_prints_choice_and_scores(self, tmp_path, config_path, captions_path, capsys):
        repo_path = build_repo(tmp_path, config_path, captions_path)
        capsys.readouterr()
        code = main(
            [
                "answer",
                "--repo", str(repo_path),
                "--config", str(config_path),
                "--question", "What is happening?",
                "--options", "a", "bb", "ccc", "dddd", "eeeee",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "answer: [0] a" in out  # shortest option wins under the mock scorer
        assert "+" in out or "-" in out  # per-option scores printed
        assert "rephrase=0" in out  # answering never writes

    def test_generative_with_four_options_exits_2(self, tmp_path, config_path, captions_path):
        repo_path = build_repo(tmp_path, config_path, captions_path)
        code = main(
            [
                "answer",
                "--repo", str(repo_path),
                "--config", str(config_path),
                "--question", "q",
                "--options", "a", "b", "c", "d",
                "--classifier", "generative",
            ]
        )
        assert code == 2


class TestEvalCommand:
    def write_dataset(self, tmp_path, n=2):
        items = [
            {
                "question_id": f"q{i}",
                "video_id": "vid",
                "question": f"question {i}",
                "options": [f"o{j}" + "x" * j for j in range(5)],
                "answer_index": 0,
                "split_tag": "causal" if i % 2 else "temporal",
            }
            for i in range(n)
        ]
        path = tmp_path / "qa.json"
        path.write_text(json.dumps({"items": items}))
        return path

    def test_eval_writes_report_and_predictions(self, tmp_path, config_path, captions_path, capsys):
        dataset = self.write_dataset(tmp_path)
        captions_dir = captions_path.parent
        report_out = tmp_path / "report.json"
        predictions_out = tmp_path / "predictions.json"
        code = main(
            [
                "eval",
                "--dataset", str(dataset),
                "--captions-dir", str(captions_dir),
                "--config", str(config_path),
                "--mode", "langrepo",
                "--report-out", str(report_out),
                "--predictions-out", str(predictions_out),
            ]
        )
        assert code == 0
        report = json.loads(report_out.read_text())
        assert report["overall_accuracy"] == 1.0
        assert report["per_split"] == {"causal": 1.0, "temporal": 1.0}
        predictions = json.loads(predictions_out.read_text())
        assert len(predictions["predictions"]) == 2
        assert "overall accuracy" in capsys.readouterr().out

    def test_eval_missing_video_captions_exits_2(self, tmp_path, config_path):
        dataset = self.write_dataset(tmp_path)
        empty_dir = tmp_path / "empty"
        empty_dir.mkdir()
        code = main(
            [
                "eval",
                "--dataset", str(dataset),
                "--captions-dir", str(empty_dir),
                "--config", str(config_path),
            ]
        )
        assert code == 2


class TestAblateCommand:
    def test_three_reports(self, tmp_path, config_path, captions_path, capsys):
        dataset = TestEvalCommand().write_dataset(tmp_path, n=1)
        out_dir = tmp_path / "ablation"
        code = main(
            [
                "ablate-length",
                "--dataset", str(dataset),
                "--captions-dir", str(captions_path.parent),
                "--config", str(config_path),
                "--mode", "llovi-whole",
                "--out-dir", str(out_dir),
            ]
        )
        assert code == 0
        names = sorted(p.name for p in out_dir.iterdir())
        assert names == ["report-0.5x.json", "report-1.0x.json", "report-2.0x.json"]
        out = capsys.readouterr().out
        assert "rate factor 0.5x" in out and "rate factor 2.0x" in out


class TestInspectCommand:
    def test_inspect_prints_rendered_lines(self, tmp_path, config_path, captions_path, capsys):
        repo_path = build_repo(tmp_path, config_path, captions_path)
        capsys.readouterr()
        assert main(["inspect", "--repo", str(repo_path)]) == 0
        out = capsys.readouterr().out
        assert "scale 0:" in out and "scale 1:" in out
        assert "[0.0s-" in out  # timestamps rendered for display

    def test_scale_filter(self, tmp_path, config_path, captions_path, capsys):
        repo_path = build_repo(tmp_path, config_path, captions_path)
        capsys.readouterr()
        assert main(["inspect", "--repo", str(repo_path), "--scale", "1"]) == 0
        out = capsys.readouterr().out
        assert "scale 1:" in out and "scale 0:" not in out

    def test_version_mismatch_exits_2(self, tmp_path, config_path, captions_path):
        repo_path = build_repo(tmp_path, config_path, captions_path)
        text = repo_path.read_text().replace('"schema_version": 1', '"schema_version": 99')
        repo_path.write_text(text)
        assert main(["inspect", "--repo", str(repo_path)]) == 2
