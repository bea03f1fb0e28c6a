"""Training loop: scheduling, artifacts, determinism, resume, failure paths."""

import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest

from conftest import desk_config
from spanhead.checkpoint import load_params
from spanhead.errors import (CheckpointError, ConfigError, FormatError,
                             TrainingError)
from spanhead.heads import build_head
from spanhead.squad_data import featurize, load_squad, write_embeddings
from spanhead.training import (EarlyStopper, METRICS_HEADER, RunConfig,
                               compute_steps, evaluate, make_provider,
                               parse_synthetic_spec, predict, train)

ARTIFACTS = ("config.json", "metrics.csv", "timing.log", "last.shlb",
             "last.shop", "best.shlb", "last_state.json")
COMPARABLE = ("metrics.csv", "last.shlb", "last.shop", "best.shlb",
              "last_state.json")  # config.json embeds out_dir, timing.log wall time


def _cfg(squad_path, out_dir, variant="fc", dropout=1.0, **kw):
    head = dataclasses.replace(desk_config(variant), dropout_keep_prob=dropout)
    defaults = dict(n_epochs=2, batch_size=1, max_seq_len=32, base_lr=1e-3,
                    warmup_fraction=0.1, seed=0, split_fraction=0.0, patience=3)
    defaults.update(kw)
    return RunConfig(head=head, squad_path=squad_path,
                     embeddings="synthetic:16,0", out_dir=str(out_dir), **defaults)


def _metrics_rows(out_dir):
    lines = (Path(out_dir) / "metrics.csv").read_text().splitlines()
    assert lines[0] + "\n" == METRICS_HEADER
    rows = []
    for line in lines[1:]:
        step, *rest = line.split(",")
        rows.append((int(step), *map(float, rest)))
    return rows


class TestComputeSteps:
    def test_documented_pairs(self):
        assert compute_steps(117000, 1, 32) == (3656, 3)
        assert compute_steps(117000, 2, 32) == (7312, 7)

    def test_small_runs_get_one_event(self):
        assert compute_steps(1000, 1, 1000) == (1, 1)
        assert compute_steps(8, 2, 1) == (16, 1)

    def test_batch_one_steps_equal_samples(self):
        assert compute_steps(500, 1, 1) == (500, 1)

    def test_invalid_inputs(self):
        with pytest.raises(ConfigError):
            compute_steps(0, 1, 32)
        with pytest.raises(ConfigError):
            compute_steps(10, 1, 0)


class TestEarlyStopper:
    def test_stops_after_exactly_patience_bad_events(self):
        s = EarlyStopper(patience=3)
        stops = [s.update(x) for x in (1.0, 1.1, 1.2, 1.3)]
        assert stops == [False, False, False, True]

    def test_improvement_resets_counter(self):
        s = EarlyStopper(patience=2)
        assert not s.update(1.0)
        assert not s.update(1.5)
        assert not s.update(0.9)   # new best
        assert not s.update(1.1)
        assert s.update(1.2)

    def test_equal_loss_counts_as_no_regression(self):
        s = EarlyStopper(patience=1)
        assert not s.update(1.0)
        assert not s.update(1.0)
        assert s.update(1.0001)


class TestProviders:
    def test_synthetic_spec_parsing(self):
        assert parse_synthetic_spec("synthetic:64,9") == (64, 9)
        with pytest.raises(ConfigError):
            parse_synthetic_spec("synthetic:64")
        with pytest.raises(ConfigError):
            parse_synthetic_spec("synthetic:a,b")

    def test_synthetic_width_must_match_head(self):
        with pytest.raises(ConfigError, match="hidden_size"):
            make_provider("synthetic:32,0", {}, expected_h=16)

    def test_bemb_missing_record_rejected(self, tmp_path, eight_example_path):
        examples = load_squad(eight_example_path)
        feats = {ex.qid: featurize(ex, 32, training=False) for ex in examples}
        path = str(tmp_path / "partial.bemb")
        some = {q: f for q, f in list(feats.items())[:3]}
        write_embeddings(
            path,
            [(q, np.ones((f.valid_len, 16), dtype=np.float32)) for q, f in some.items()],
            h=16,
        )
        with pytest.raises(FormatError, match="lacks records"):
            make_provider(path, feats, expected_h=16)


class TestTrainBasics:
    def test_artifacts_and_summary(self, tmp_path, eight_example_path):
        cfg = _cfg(eight_example_path, tmp_path / "run")
        summary = train(cfg)
        assert summary["n_steps"] == 16
        assert summary["n_events"] == 1
        assert summary["steps_run"] == 16
        assert summary["events_done"] == 1
        assert not summary["stopped_early"]
        for name in ARTIFACTS:
            assert (tmp_path / "run" / name).is_file(), name
        rows = _metrics_rows(tmp_path / "run")
        assert [r[0] for r in rows] == [16]
        saved = json.loads((tmp_path / "run" / "config.json").read_text())
        assert RunConfig.from_dict(saved).to_dict() == cfg.to_dict()

    def test_events_evenly_spaced_and_best_checkpoint_is_minimum(
            self, tmp_path, eight_example_path):
        out = tmp_path / "run"
        cfg = _cfg(eight_example_path, out, dropout=0.8, n_epochs=250,
                   batch_size=1, base_lr=5e-3)
        summary = train(cfg)
        rows = _metrics_rows(out)
        assert [r[0] for r in rows] == [1000, 2000]
        eval_losses = [r[2] for r in rows]
        assert summary["best_eval_loss"] == min(eval_losses)

        # best.shlb must reproduce exactly the minimum logged eval loss.
        from spanhead.training import _evaluate_split, _featurize_sets

        head, store = build_head(cfg.head, cfg.seed)
        _, arrays = load_params(str(out / "best.shlb"), cfg.head.digest())
        store.load_arrays(arrays)
        examples = load_squad(cfg.squad_path)
        _, eval_feats, eval_examples = _featurize_sets(examples, cfg)
        provider = make_provider(cfg.embeddings, {f.qid: f for f in eval_feats}, 16)
        loss, _, _, _ = _evaluate_split(head, eval_feats, eval_examples,
                                        provider, cfg.max_answer_len)
        assert loss == min(eval_losses)

    def test_stop_after_steps(self, tmp_path, eight_example_path):
        cfg = _cfg(eight_example_path, tmp_path / "run", n_epochs=10)
        summary = train(cfg, stop_after_steps=5)
        assert summary["steps_run"] == 5

    def test_split_fraction_carves_whole_articles(self, tmp_path, eight_example_path):
        cfg = _cfg(eight_example_path, tmp_path / "run", split_fraction=0.5,
                   n_epochs=4)
        summary = train(cfg)
        # 4 of 8 examples held out: 4 train features, 4 epochs, batch 1.
        assert summary["n_steps"] == 16

    def test_validation_errors(self, tmp_path, eight_example_path):
        with pytest.raises(ConfigError, match="n_epochs"):
            train(_cfg(eight_example_path, tmp_path / "a", n_epochs=0))
        with pytest.raises(ConfigError, match="squad"):
            train(_cfg(str(tmp_path / "missing.json"), tmp_path / "b"))
        with pytest.raises(ConfigError, match="split_fraction"):
            train(_cfg(eight_example_path, tmp_path / "c", split_fraction=1.0))


class TestBembTraining:
    def _write_bemb(self, path, feats, short_qid=None, h=16):
        rng = np.random.default_rng(0)
        records = []
        for qid, f in feats.items():
            rows = 3 if qid == short_qid else f.valid_len
            records.append((qid, rng.standard_normal((rows, h)).astype(np.float32) * 0.3))
        write_embeddings(str(path), records, h=h)

    def test_trains_from_file(self, tmp_path, eight_example_path):
        examples = load_squad(eight_example_path)
        feats = {ex.qid: featurize(ex, 32, training=False) for ex in examples}
        bemb = tmp_path / "e.bemb"
        self._write_bemb(bemb, feats)
        cfg = _cfg(eight_example_path, tmp_path / "run", n_epochs=1)
        cfg.embeddings = str(bemb)
        summary = train(cfg)
        assert summary["n_steps"] == 8
        assert (tmp_path / "run" / "metrics.csv").is_file()

    def test_short_record_drops_training_feature(self, tmp_path, eight_example_path):
        # p1's gold span sits beyond an embedded length of 3, so the feature
        # can teach nothing and training must skip it; evaluation keeps it.
        examples = load_squad(eight_example_path)
        feats = {ex.qid: featurize(ex, 32, training=False) for ex in examples}
        bemb = tmp_path / "short.bemb"
        self._write_bemb(bemb, feats, short_qid="p1")
        cfg = _cfg(eight_example_path, tmp_path / "run", n_epochs=1)
        cfg.embeddings = str(bemb)
        summary = train(cfg)
        assert summary["n_steps"] == 7


class TestDeterminismAndResume:
    def _run(self, squad, out, **kw):
        cfg = _cfg(squad, out, dropout=0.8, n_epochs=250, batch_size=2,
                   base_lr=2e-3, **kw)
        return cfg, train(cfg)

    def test_same_seed_byte_identical(self, tmp_path, eight_example_path):
        self._run(eight_example_path, tmp_path / "a")
        self._run(eight_example_path, tmp_path / "b")
        for name in COMPARABLE:
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes()
            assert a == b, name

    def test_different_seed_differs(self, tmp_path, eight_example_path):
        self._run(eight_example_path, tmp_path / "a")
        self._run(eight_example_path, tmp_path / "b", seed=1)
        assert (tmp_path / "a" / "last.shlb").read_bytes() != \
            (tmp_path / "b" / "last.shlb").read_bytes()

    def test_resume_reproduces_uninterrupted_run(self, tmp_path, eight_example_path):
        # 8 examples, batch 2, 500 epochs -> 2000 steps, events at 1000/2000.
        full_cfg = _cfg(eight_example_path, tmp_path / "full", dropout=0.8,
                        n_epochs=500, batch_size=2, base_lr=2e-3)
        train(full_cfg)

        part_cfg = _cfg(eight_example_path, tmp_path / "part", dropout=0.8,
                        n_epochs=500, batch_size=2, base_lr=2e-3)
        first = train(part_cfg, stop_after_steps=1000)
        assert first["steps_run"] == 1000
        second = train(part_cfg, resume=True)
        assert second["steps_run"] == 2000
        for name in COMPARABLE:
            a = (tmp_path / "full" / name).read_bytes()
            b = (tmp_path / "part" / name).read_bytes()
            assert a == b, name

    def test_resume_without_state_rejected(self, tmp_path, eight_example_path):
        cfg = _cfg(eight_example_path, tmp_path / "empty")
        with pytest.raises(TrainingError, match="nothing to resume"):
            train(cfg, resume=True)

    def test_resume_with_changed_config_rejected(self, tmp_path, eight_example_path):
        cfg = _cfg(eight_example_path, tmp_path / "run")
        train(cfg)
        altered = _cfg(eight_example_path, tmp_path / "run", base_lr=9e-3)
        with pytest.raises(TrainingError, match="config differs"):
            train(altered, resume=True)


class TestFailureIsolation:
    def test_divergence_aborts_without_clobbering_checkpoints(
            self, tmp_path, eight_example_path):
        out = tmp_path / "run"
        cfg = _cfg(eight_example_path, out)
        train(cfg)
        before = (out / "last.shlb").read_bytes()

        # Decoupled weight decay at this lr multiplies weights by ~-1e35 per
        # step: guaranteed float32 overflow within a few steps.
        wild = _cfg(eight_example_path, out, base_lr=1e37, weight_decay=0.01,
                    n_epochs=50)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(TrainingError, match="non-finite"):
                train(wild)
        assert (out / "last.shlb").read_bytes() == before
        load_params(str(out / "last.shlb"), cfg.head.digest())


class TestPredictEvaluate:
    @pytest.fixture
    def trained(self, tmp_path, eight_example_path):
        out = tmp_path / "train"
        cfg = _cfg(eight_example_path, out, n_epochs=4)
        train(cfg)
        return cfg, out

    def test_predict_writes_aligned_maps(self, tmp_path, eight_example_path, trained):
        cfg, out = trained
        pred_dir = tmp_path / "pred"
        preds = predict(cfg.head, str(out / "best.shlb"), eight_example_path,
                        cfg.embeddings, str(pred_dir), max_seq_len=32)
        assert len(preds) == 8
        pred_map = json.loads((pred_dir / "predictions.json").read_text())
        odds_map = json.loads((pred_dir / "null_odds.json").read_text())
        assert sorted(pred_map) == sorted(odds_map)
        assert len(pred_map) == 8
        assert all(abs(v) <= 1e30 for v in odds_map.values())

    def test_predict_refuses_other_configs_checkpoint(
            self, tmp_path, eight_example_path, trained):
        cfg, out = trained
        other = desk_config("cnn")
        with pytest.raises(CheckpointError, match="different head config"):
            predict(other, str(out / "best.shlb"), eight_example_path,
                    "synthetic:16,0", str(tmp_path / "p2"), max_seq_len=32)

    def test_evaluate_round_trip(self, tmp_path, eight_example_path, trained):
        cfg, out = trained
        pred_dir = tmp_path / "pred"
        predict(cfg.head, str(out / "best.shlb"), eight_example_path,
                cfg.embeddings, str(pred_dir), max_seq_len=32)
        eval_dir = tmp_path / "eval"
        result = evaluate(str(pred_dir / "predictions.json"),
                          str(pred_dir / "null_odds.json"),
                          eight_example_path, str(eval_dir))
        report = json.loads((eval_dir / "report.json").read_text())
        assert report == result
        assert abs(result["threshold"]) <= 1e30
        assert result["n_total"] == 8
        assert result["overall_f1"] >= result["unthresholded_overall_f1"]
        final = json.loads((eval_dir / "thresholded_predictions.json").read_text())
        assert sorted(final) == sorted(json.loads(
            (pred_dir / "predictions.json").read_text()))

    def test_evaluate_rejects_qid_mismatch(self, tmp_path, eight_example_path, trained):
        cfg, out = trained
        pred_dir = tmp_path / "pred"
        predict(cfg.head, str(out / "best.shlb"), eight_example_path,
                cfg.embeddings, str(pred_dir), max_seq_len=32)
        odds = json.loads((pred_dir / "null_odds.json").read_text())
        odds.pop(sorted(odds)[0])
        broken = pred_dir / "broken_odds.json"
        broken.write_text(json.dumps(odds))
        with pytest.raises(FormatError, match="mismatch"):
            evaluate(str(pred_dir / "predictions.json"), str(broken),
                     eight_example_path, str(tmp_path / "eval"))
