"""Training, prediction and evaluation orchestration.

Runs are bit-deterministic for a fixed (config, seed): batch order is a pure
function of (seed, epoch), dropout masks of (seed, step, example slot), and
all reductions are ordered. Checkpoints are written only at eval-event
boundaries, which is what makes resumption exact: a resumed run re-derives
its position in the batch stream from the saved global step alone.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import checkpoint as ckpt
from .diffmath import ops
from .errors import ConfigError, FormatError, TrainingError
from .evaluator import (DEFAULT_MAX_ANSWER_LEN, Prediction, extract_best_span,
                        report, sweep_null_threshold)
from .heads import HeadConfig, HeadModel, build_head
from .loss_opt import AdamState, adam_update, span_loss
from .squad_data import (EmbeddedSequence, Feature, SquadExample, batches,
                         bemb_width, featurize, load_embeddings, load_squad,
                         split_train_eval, synthetic_embed)

log = logging.getLogger("spanhead")

SCORE_DIFF_CLAMP = 1e30  # JSON has no infinity literal

METRICS_HEADER = "step,train_loss,eval_loss,eval_em,eval_f1,learning_rate\n"


@dataclass
class RunConfig:
    head: HeadConfig
    squad_path: str
    embeddings: str              # BEMB path or "synthetic:H,seed"
    out_dir: str
    n_epochs: int = 1
    batch_size: int = 32
    max_seq_len: int = 384
    base_lr: float = 3e-4
    warmup_fraction: float = 0.1
    weight_decay: float = 0.0
    seed: int = 0
    split_fraction: float = 0.10
    patience: int = 3
    max_answer_len: int = DEFAULT_MAX_ANSWER_LEN
    single_thread: bool = True

    def validate(self) -> None:
        self.head.validate()
        if self.n_epochs < 1:
            raise ConfigError(f"n_epochs must be >= 1, got {self.n_epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_seq_len < 8:
            raise ConfigError(f"max_seq_len must be >= 8, got {self.max_seq_len}")
        if not 0.0 <= self.split_fraction < 1.0:
            raise ConfigError(
                f"split_fraction must be in [0, 1), got {self.split_fraction}"
            )
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if not Path(self.squad_path).is_file():
            raise ConfigError(f"squad file not readable: {self.squad_path}")
        if not self.embeddings.startswith("synthetic:") and not Path(self.embeddings).is_file():
            raise ConfigError(f"embeddings file not readable: {self.embeddings}")

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "head"}
        d["head"] = self.head.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        head = HeadConfig.from_dict(d.pop("head"))
        return cls(head=head, **d)


def compute_steps(n_samples: int, n_epochs: int, batch_size: int) -> Tuple[int, int]:
    """(floor(samples*epochs/batch), max(1, floor(steps/1000))) with
    evaluations every floor(steps/events) steps."""
    if min(n_samples, n_epochs, batch_size) < 1:
        raise ConfigError("n_samples, n_epochs and batch_size must all be >= 1")
    n_steps = (n_samples * n_epochs) // batch_size
    n_events = max(1, n_steps // 1000)
    return n_steps, n_events


class EarlyStopper:
    """Stop after `patience` consecutive eval losses above the running min."""

    def __init__(self, patience: int, best: float = math.inf, bad_events: int = 0):
        self.patience = patience
        self.best = best
        self.bad_events = bad_events

    def update(self, eval_loss: float) -> bool:
        if eval_loss > self.best:
            self.bad_events += 1
        else:
            self.best = eval_loss
            self.bad_events = 0
        return self.bad_events >= self.patience


Provider = Callable[[Feature], EmbeddedSequence]


def parse_synthetic_spec(spec: str) -> Tuple[int, int]:
    body = spec[len("synthetic:"):]
    try:
        h_str, seed_str = body.split(",")
        return int(h_str), int(seed_str)
    except ValueError:
        raise ConfigError(
            f'embeddings spec {spec!r} is not of the form "synthetic:H,seed"'
        ) from None


def make_provider(
    embeddings: str, features_by_qid: Dict[str, Feature], expected_h: int
) -> Provider:
    """Embedding source: synthetic generator or an eagerly loaded BEMB file."""
    if embeddings.startswith("synthetic:"):
        h, seed = parse_synthetic_spec(embeddings)
        if h != expected_h:
            raise ConfigError(
                f"synthetic embedding width {h} != head hidden_size {expected_h}"
            )
        return lambda feat: synthetic_embed(feat, h, seed)

    h = bemb_width(embeddings)
    if h != expected_h:
        raise ConfigError(
            f"embedding file width {h} != head hidden_size {expected_h}"
        )
    table = {seq.feature.qid: seq for seq in load_embeddings(embeddings, features_by_qid, h)}
    missing = sorted(set(features_by_qid) - set(table))
    if missing:
        raise FormatError(f"embedding file lacks records for qids: {missing[:10]}")
    return lambda feat: table[feat.qid]


def _featurize_sets(
    examples: Sequence[SquadExample], cfg: RunConfig
) -> Tuple[List[Feature], List[Feature], List[SquadExample]]:
    if cfg.split_fraction == 0.0:
        train_ex, eval_ex = list(examples), list(examples)
    else:
        train_ex, eval_ex = split_train_eval(examples, cfg.split_fraction, cfg.seed)
    train_feats = []
    for ex in train_ex:
        f = featurize(ex, cfg.max_seq_len, training=True)
        if f is not None:
            train_feats.append(f)
    eval_feats = [featurize(ex, cfg.max_seq_len, training=False) for ex in eval_ex]
    return train_feats, eval_feats, eval_ex


def _evaluate_split(
    head: HeadModel,
    eval_feats: Sequence[Feature],
    eval_examples: Sequence[SquadExample],
    provider: Provider,
    max_answer_len: int,
) -> Tuple[float, float, float, List[Prediction]]:
    """Mean span loss plus EM/F1 at the unadjusted threshold (tau = 0)."""
    losses: List[float] = []
    preds: List[Prediction] = []
    for feat in eval_feats:
        seq = provider(feat)
        logits = head.span_logits(seq.embeddings, seq.valid_len)
        s, e = feat.start_pos, feat.end_pos
        if e >= seq.valid_len:
            s = e = 0
        losses.append(span_loss(logits, s, e).item())
        preds.append(extract_best_span(logits, feat, max_answer_len, seq.valid_len))
    rep = report(preds, eval_examples, tau=0.0)
    return sum(losses) / len(losses), rep.overall_em, rep.overall_f1, preds


def _fmt(x: float) -> str:
    return repr(float(x))


def _state_path(out: Path) -> Path:
    return out / "last_state.json"


def _write_state(out: Path, global_step: int, events_done: int,
                 stopper: EarlyStopper, best_eval_loss: float) -> None:
    state = {
        "global_step": global_step,
        "events_done": events_done,
        "stopper_best": stopper.best.hex() if math.isfinite(stopper.best) else None,
        "bad_events": stopper.bad_events,
        "best_eval_loss": best_eval_loss.hex() if math.isfinite(best_eval_loss) else None,
    }
    _state_path(out).write_text(json.dumps(state, sort_keys=True, indent=2) + "\n")


def train(cfg: RunConfig, stop_after_steps: Optional[int] = None,
          resume: bool = False) -> dict:
    """Full training run; returns a summary of what happened.

    stop_after_steps halts the loop after that many global steps (used to
    exercise resumption); resume continues a run from out_dir's last
    checkpoint, which must have been written by an identical config.
    """
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    examples = load_squad(cfg.squad_path)
    train_feats, eval_feats, eval_examples = _featurize_sets(examples, cfg)
    if not train_feats:
        raise TrainingError("no usable training features after featurization")
    if not eval_feats:
        raise TrainingError("evaluation split is empty; lower split_fraction")

    features_by_qid = {f.qid: f for f in train_feats}
    features_by_qid.update({f.qid: f for f in eval_feats})
    provider = make_provider(cfg.embeddings, features_by_qid, cfg.head.hidden_size)

    # With file-based embeddings the record's token count governs valid_len;
    # training examples whose gold indices fall beyond it teach nothing.
    # (Synthetic embeddings always agree with the feature's own valid_len.)
    if not cfg.embeddings.startswith("synthetic:"):
        kept = [f for f in train_feats if f.end_pos < provider(f).valid_len]
        if len(kept) != len(train_feats):
            log.info("dropped %d training features whose gold span exceeds the "
                     "embedded length", len(train_feats) - len(kept))
        train_feats = kept
        if not train_feats:
            raise TrainingError("no training features left after embedding-length filter")

    head, store = build_head(cfg.head, cfg.seed)
    n_steps, n_events = compute_steps(len(train_feats), cfg.n_epochs, cfg.batch_size)
    eval_every = n_steps // n_events
    adam = AdamState(base_lr=cfg.base_lr, warmup_fraction=cfg.warmup_fraction,
                     total_steps=n_steps, weight_decay=cfg.weight_decay)
    digest = cfg.head.digest()

    metrics_path = out / "metrics.csv"
    timing_path = out / "timing.log"
    config_path = out / "config.json"

    global_step = 0
    events_done = 0
    best_eval_loss = math.inf
    stopper = EarlyStopper(cfg.patience)

    if resume:
        if not _state_path(out).is_file():
            raise TrainingError(f"nothing to resume in {out}: no last_state.json")
        saved_cfg = RunConfig.from_dict(json.loads(config_path.read_text()))
        if saved_cfg.to_dict() != cfg.to_dict():
            raise TrainingError("resume config differs from the saved run config")
        _, arrays = ckpt.load_params(str(out / "last.shlb"), digest)
        store.load_arrays(arrays)
        ckpt.load_optimizer(str(out / "last.shop"), adam)
        state = json.loads(_state_path(out).read_text())
        global_step = state["global_step"]
        events_done = state["events_done"]
        best_eval_loss = (float.fromhex(state["best_eval_loss"])
                          if state["best_eval_loss"] else math.inf)
        stopper = EarlyStopper(
            cfg.patience,
            best=float.fromhex(state["stopper_best"]) if state["stopper_best"] else math.inf,
            bad_events=state["bad_events"],
        )
        if adam.step != global_step:
            raise TrainingError(
                f"optimizer step {adam.step} disagrees with trainer state {global_step}"
            )
    else:
        config_path.write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=2) + "\n")
        metrics_path.write_text(METRICS_HEADER)
        timing_path.write_text("")

    log.info("training %s: %d features, %d steps, eval every %d (%d events)",
             cfg.head.variant, len(train_feats), n_steps, eval_every, n_events)

    use_dropout = cfg.head.dropout_keep_prob < 1.0
    steps_per_epoch = math.ceil(len(train_feats) / cfg.batch_size)
    window_sum, window_n = 0.0, 0
    lr_used = adam.current_lr()
    stopped_early = False
    t_start = time.monotonic()

    def run_event() -> None:
        nonlocal window_sum, window_n, events_done, best_eval_loss, stopped_early
        eval_loss, em, f1, _ = _evaluate_split(
            head, eval_feats, eval_examples, provider, cfg.max_answer_len
        )
        train_loss = window_sum / window_n if window_n else float("nan")
        with metrics_path.open("a") as f:
            f.write(f"{global_step},{_fmt(train_loss)},{_fmt(eval_loss)},"
                    f"{_fmt(em)},{_fmt(f1)},{_fmt(lr_used)}\n")
        with timing_path.open("a") as f:
            f.write(f"step {global_step} wall {time.monotonic() - t_start:.3f}s\n")
        window_sum, window_n = 0.0, 0
        events_done += 1
        ckpt.save_params(str(out / "last.shlb"), store, digest)
        ckpt.save_optimizer(str(out / "last.shop"), adam)
        if eval_loss < best_eval_loss:
            best_eval_loss = eval_loss
            ckpt.save_params(str(out / "best.shlb"), store, digest)
        stopped = stopper.update(eval_loss)
        _write_state(out, global_step, events_done, stopper, best_eval_loss)
        log.info("step %d: train_loss %.4f eval_loss %.4f EM %.2f F1 %.2f lr %.2e",
                 global_step, train_loss, eval_loss, em, f1, lr_used)
        if stopped:
            stopped_early = True

    epoch = global_step // steps_per_epoch
    while global_step < n_steps and not stopped_early:
        epoch_batches = list(batches(train_feats, cfg.batch_size, cfg.seed, epoch))
        skip = global_step % steps_per_epoch if epoch == global_step // steps_per_epoch else 0
        for batch in epoch_batches[skip:]:
            if global_step >= n_steps or stopped_early:
                break
            store.zero_grad()
            losses = []
            for slot, feat in enumerate(batch):
                seq = provider(feat)
                rng = (np.random.default_rng((cfg.seed, global_step + 1, slot))
                       if use_dropout else None)
                logits = head.span_logits(seq.embeddings, seq.valid_len, rng)
                losses.append(span_loss(logits, feat.start_pos, feat.end_pos))
            total = ops.mean_scalars(losses)
            loss_val = total.item()
            if not math.isfinite(loss_val):
                raise TrainingError(
                    f"training loss became non-finite at step {global_step + 1}"
                )
            total.backward()
            lr_used = adam_update(store, adam)
            global_step += 1
            window_sum += loss_val
            window_n += 1
            if events_done < n_events and global_step == (events_done + 1) * eval_every:
                run_event()
            if stop_after_steps is not None and global_step >= stop_after_steps:
                break
        else:
            epoch += 1
            continue
        break

    return {
        "n_steps": n_steps,
        "n_events": n_events,
        "steps_run": global_step,
        "events_done": events_done,
        "stopped_early": stopped_early,
        "best_eval_loss": best_eval_loss,
        "out_dir": str(out),
    }


def _clamp_diff(x: float) -> float:
    return max(-SCORE_DIFF_CLAMP, min(SCORE_DIFF_CLAMP, x))


def predict(
    head_config: HeadConfig,
    params_path: str,
    squad_path: str,
    embeddings: str,
    out_dir: str,
    max_seq_len: int = 384,
    max_answer_len: int = DEFAULT_MAX_ANSWER_LEN,
) -> List[Prediction]:
    """Run span extraction over a dataset; write predictions + null odds.

    predictions.json carries the best non-null answer per qid ("" only when
    the context admits no span at all); the null decision is applied later,
    when evaluate sweeps the threshold.
    """
    head_config.validate()
    _, arrays = ckpt.load_params(params_path, head_config.digest())
    head, store = build_head(head_config, seed=0)
    store.load_arrays(arrays)

    examples = load_squad(squad_path)
    feats = [featurize(ex, max_seq_len, training=False) for ex in examples]
    provider = make_provider(embeddings, {f.qid: f for f in feats}, head_config.hidden_size)

    preds = []
    for feat in feats:
        seq = provider(feat)
        logits = head.span_logits(seq.embeddings, seq.valid_len)
        preds.append(extract_best_span(logits, feat, max_answer_len, seq.valid_len))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pred_map = {p.qid: p.text for p in preds}
    odds_map = {p.qid: _clamp_diff(p.score_diff) for p in preds}
    (out / "predictions.json").write_text(
        json.dumps(pred_map, sort_keys=True, indent=2) + "\n"
    )
    (out / "null_odds.json").write_text(
        json.dumps(odds_map, sort_keys=True, indent=2) + "\n"
    )
    return preds


def evaluate(
    predictions_path: str, null_odds_path: str, squad_path: str, out_dir: str
) -> dict:
    """Sweep the null threshold, apply it, and report sliced EM/F1."""
    with open(predictions_path, encoding="utf-8") as f:
        pred_map = json.load(f)
    with open(null_odds_path, encoding="utf-8") as f:
        odds_map = json.load(f)
    only_preds = sorted(set(pred_map) - set(odds_map))
    only_odds = sorted(set(odds_map) - set(pred_map))
    if only_preds or only_odds:
        raise FormatError(
            "prediction/null-odds qid mismatch: "
            f"only in predictions {only_preds[:10]}, only in null odds {only_odds[:10]}"
        )

    examples = load_squad(squad_path)
    preds = [
        Prediction(qid=qid, text=text, best_nonnull_score=0.0, null_score=0.0,
                   score_diff=float(odds_map[qid]))
        for qid, text in pred_map.items()
    ]
    tau, _ = sweep_null_threshold(preds, examples)
    thresholded = report(preds, examples, tau)
    unthresholded = report(preds, examples, 0.0)

    result = thresholded.to_dict()
    result["threshold"] = _clamp_diff(tau)  # JSON cannot carry -inf
    result["unthresholded_overall_em"] = unthresholded.overall_em
    result["unthresholded_overall_f1"] = unthresholded.overall_f1

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(result, sort_keys=True, indent=2) + "\n")
    final_map = {p.qid: p.final_text(tau) for p in preds}
    (out / "thresholded_predictions.json").write_text(
        json.dumps(final_map, sort_keys=True, indent=2) + "\n"
    )
    return result
