"""Command line interface: flows, env overrides, error contract."""

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from spanhead.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def _train_args(squad, out, **extra):
    args = ["train", "--squad", squad, "--embeddings", "synthetic:16,0",
            "--out", str(out), "--head", "fc", "--hidden-size", "16",
            "--epochs", "2", "--batch-size", "1", "--max-seq-len", "32",
            "--split-fraction", "0", "--dropout-keep", "1.0"]
    for k, v in extra.items():
        args += [f"--{k.replace('_', '-')}", str(v)]
    return args


class TestTrainCommand:
    def test_happy_path_echoes_summary(self, runner, tmp_path, eight_example_path):
        out = tmp_path / "run"
        result = runner.invoke(main, _train_args(eight_example_path, out))
        assert result.exit_code == 0, result.output
        summary = json.loads(result.output.strip().splitlines()[-1])
        assert summary["n_steps"] == 16
        assert (out / "metrics.csv").is_file()
        assert (out / "best.shlb").is_file()

    def test_seed_env_override(self, runner, tmp_path, eight_example_path):
        out = tmp_path / "run"
        result = runner.invoke(main, _train_args(eight_example_path, out),
                               env={"SPANHEAD_TRAIN_SEED": "3"})
        assert result.exit_code == 0, result.output
        cfg = json.loads((out / "config.json").read_text())
        assert cfg["seed"] == 3

    def test_flag_beats_env(self, runner, tmp_path, eight_example_path):
        out = tmp_path / "run"
        result = runner.invoke(main, _train_args(eight_example_path, out, seed=7),
                               env={"SPANHEAD_TRAIN_SEED": "3"})
        assert result.exit_code == 0, result.output
        cfg = json.loads((out / "config.json").read_text())
        assert cfg["seed"] == 7

    def test_missing_squad_gives_typed_error_and_exit_2(self, runner, tmp_path):
        result = runner.invoke(
            main, _train_args(str(tmp_path / "nope.json"), tmp_path / "run"))
        assert result.exit_code == 2
        line = result.stderr.strip().splitlines()[-1]
        assert line.startswith("error: ConfigError: ")
        assert "squad file not readable" in line

    def test_bad_synthetic_spec_rejected(self, runner, tmp_path, eight_example_path):
        args = _train_args(eight_example_path, tmp_path / "run")
        args[args.index("synthetic:16,0")] = "synthetic:banana"
        result = runner.invoke(main, args)
        assert result.exit_code == 2
        assert "error: ConfigError" in result.stderr

    def test_resume_flow(self, runner, tmp_path, eight_example_path):
        # Checkpoints land at eval events, so stop at the first one: 8
        # features, batch 1, 250 epochs -> 2000 steps, events at 1000/2000.
        out = tmp_path / "run"
        first = runner.invoke(main, _train_args(
            eight_example_path, out, epochs=250, stop_after_steps=1000))
        assert first.exit_code == 0, first.output
        assert json.loads(first.output.splitlines()[-1])["steps_run"] == 1000
        second = runner.invoke(main, _train_args(
            eight_example_path, out, epochs=250) + ["--resume"])
        assert second.exit_code == 0, second.output
        assert json.loads(second.output.splitlines()[-1])["steps_run"] == 2000


class TestPredictEvaluateCommands:
    @pytest.fixture
    def run_dir(self, runner, tmp_path, eight_example_path):
        out = tmp_path / "run"
        result = runner.invoke(main, _train_args(eight_example_path, out, epochs=4))
        assert result.exit_code == 0, result.output
        return out

    def _predict(self, runner, run_dir, squad, out):
        return runner.invoke(main, [
            "predict", "--checkpoint", str(run_dir / "best.shlb"),
            "--config", str(run_dir / "config.json"),
            "--squad", squad, "--embeddings", "synthetic:16,0",
            "--out", str(out), "--max-seq-len", "32"])

    def test_predict_then_evaluate(self, runner, tmp_path, eight_example_path, run_dir):
        pred_dir = tmp_path / "pred"
        result = self._predict(runner, run_dir, eight_example_path, pred_dir)
        assert result.exit_code == 0, result.output
        assert "wrote 8 predictions" in result.output
        assert (pred_dir / "predictions.json").is_file()
        assert (pred_dir / "null_odds.json").is_file()

        eval_dir = tmp_path / "eval"
        result = runner.invoke(main, [
            "evaluate", "--predictions", str(pred_dir / "predictions.json"),
            "--null-odds", str(pred_dir / "null_odds.json"),
            "--squad", eight_example_path, "--out", str(eval_dir)])
        assert result.exit_code == 0, result.output
        assert "threshold tau" in result.output
        assert "overall" in result.output and "no-answer" in result.output
        report = json.loads((eval_dir / "report.json").read_text())
        assert report["n_total"] == 8

    def test_predict_digest_mismatch(self, runner, tmp_path, eight_example_path, run_dir):
        # A config describing a different head must refuse the checkpoint.
        cfg = json.loads((run_dir / "config.json").read_text())
        cfg["head"]["variant"] = "cnn"
        other = tmp_path / "other_config.json"
        other.write_text(json.dumps(cfg))
        result = runner.invoke(main, [
            "predict", "--checkpoint", str(run_dir / "best.shlb"),
            "--config", str(other), "--squad", eight_example_path,
            "--embeddings", "synthetic:16,0", "--out", str(tmp_path / "p"),
            "--max-seq-len", "32"])
        assert result.exit_code == 2
        assert "error: CheckpointError" in result.stderr
        assert "different head config" in result.stderr

    def test_evaluate_qid_mismatch(self, runner, tmp_path, eight_example_path, run_dir):
        pred_dir = tmp_path / "pred"
        assert self._predict(runner, run_dir, eight_example_path, pred_dir).exit_code == 0
        odds = json.loads((pred_dir / "null_odds.json").read_text())
        odds.pop(sorted(odds)[0])
        (pred_dir / "null_odds.json").write_text(json.dumps(odds))
        result = runner.invoke(main, [
            "evaluate", "--predictions", str(pred_dir / "predictions.json"),
            "--null-odds", str(pred_dir / "null_odds.json"),
            "--squad", eight_example_path, "--out", str(tmp_path / "eval")])
        assert result.exit_code == 2
        assert "error: FormatError" in result.stderr


class TestHelp:
    def test_group_lists_subcommands(self, runner):
        result = runner.invoke(main, ["--help"])
        assert result.exit_code == 0
        for cmd in ("train", "predict", "evaluate"):
            assert cmd in result.output

    def test_train_help_shows_defaults(self, runner):
        result = runner.invoke(main, ["train", "--help"])
        assert result.exit_code == 0
        assert "--kernel-widths" in result.output
        assert "3,5,7" in result.output
