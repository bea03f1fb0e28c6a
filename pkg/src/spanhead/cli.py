"""Command-line interface: train / predict / evaluate.

Every flag can also be set through an environment variable named
SPANHEAD_<COMMAND>_<FLAG> (e.g. SPANHEAD_TRAIN_SEED=7 mirrors
`spanhead train --seed 7`). Errors print one machine-readable line
`error: <type>: <message>` on stderr and exit nonzero.
"""

from __future__ import annotations

import os
import sys


def _pin_threads() -> None:
    """Cap BLAS pools to one thread for bit-exact reductions.

    Must happen before numpy first loads its BLAS, hence before any spanhead
    submodule import; --single-thread / SPANHEAD_SINGLE_THREAD is honored by
    peeking at argv since no parser exists yet.
    """
    wants = "--single-thread" in sys.argv or os.environ.get(
        "SPANHEAD_SINGLE_THREAD", ""
    ).lower() in ("1", "true", "yes")
    if wants:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, "1")


_pin_threads()

import json
import logging

import click

from .errors import SpanHeadError
from .heads import VARIANTS, HeadConfig

_HEAD_CHOICES = click.Choice(VARIANTS)

logging.basicConfig(level=logging.INFO, format="%(message)s")


def _fail(exc: Exception) -> None:
    click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    sys.exit(2)


def _head_config(head, hidden_size, kernel_widths, filters, lstm_hidden,
                 ctx_channels, gen_width, apply_width, dropout_keep) -> HeadConfig:
    try:
        widths = tuple(int(w) for w in kernel_widths.split(",") if w.strip())
    except ValueError:
        raise SpanHeadError(f"--kernel-widths must be comma-separated integers, got {kernel_widths!r}")
    cfg = HeadConfig(
        variant=head,
        hidden_size=hidden_size,
        kernel_widths=widths,
        filters_per_kernel=filters,
        lstm_hidden=lstm_hidden,
        context_out_channels=ctx_channels,
        generator_width=gen_width,
        applied_width=apply_width,
        dropout_keep_prob=dropout_keep,
    )
    cfg.validate()
    return cfg


def _embeddings_h(embeddings: str) -> int:
    """Infer H from the embedding source so --hidden-size can be left unset."""
    from .squad_data import bemb_width
    from .training import parse_synthetic_spec

    if embeddings.startswith("synthetic:"):
        return parse_synthetic_spec(embeddings)[0]
    return bemb_width(embeddings)


@click.group(context_settings={"auto_envvar_prefix": "SPANHEAD"})
def main() -> None:
    """Span-prediction heads over frozen embeddings: train, predict, evaluate."""


def _common_head_options(f):
    f = click.option("--dropout-keep", type=float, default=0.9, show_default=True,
                     help="Keep probability for input dropout during training.")(f)
    f = click.option("--apply-width", type=int, default=5, show_default=True,
                     help="Width of the generated filter (ctx-cnn).")(f)
    f = click.option("--gen-width", type=int, default=5, show_default=True,
                     help="Width of the filter-generator convolution (ctx-cnn).")(f)
    f = click.option("--ctx-channels", type=int, default=16, show_default=True,
                     help="Output channels of the generated filter (ctx-cnn).")(f)
    f = click.option("--lstm-hidden", type=int, default=256, show_default=True,
                     help="LSTM state size (lstm).")(f)
    f = click.option("--filters", type=int, default=64, show_default=True,
                     help="Filters per kernel width (cnn).")(f)
    f = click.option("--kernel-widths", default="3,5,7", show_default=True,
                     help="Comma-separated convolution widths (cnn).")(f)
    f = click.option("--hidden-size", type=int, default=0,
                     help="Embedding width H; 0 infers it from --embeddings.")(f)
    f = click.option("--head", type=_HEAD_CHOICES, default="fc", show_default=True,
                     help="Which span-prediction network to use.")(f)
    return f


@main.command()
@_common_head_options
@click.option("--squad", required=True, help="SQuAD 2.0 JSON file.")
@click.option("--embeddings", required=True,
              help='BEMB file or "synthetic:H,seed".')
@click.option("--out", required=True, help="Output directory for the run.")
@click.option("--epochs", type=int, default=1, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--max-seq-len", type=int, default=384, show_default=True)
@click.option("--lr", type=float, default=3e-4, show_default=True)
@click.option("--warmup-fraction", type=float, default=0.1, show_default=True)
@click.option("--weight-decay", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--split-fraction", type=float, default=0.10, show_default=True,
              help="Held-out article fraction; 0 evaluates on the training set.")
@click.option("--patience", type=int, default=3, show_default=True,
              help="Consecutive eval-loss increases tolerated before stopping.")
@click.option("--max-answer-len", type=int, default=30, show_default=True)
@click.option("--stop-after-steps", type=int, default=0,
              help="Halt after this many steps (0 = run to completion).")
@click.option("--resume", is_flag=True, help="Continue from out dir's last checkpoint.")
@click.option("--single-thread", is_flag=True,
              help="Pin BLAS to one thread for bit-exact runs.")
def train(head, hidden_size, kernel_widths, filters, lstm_hidden, ctx_channels,
          gen_width, apply_width, dropout_keep, squad, embeddings, out, epochs,
          batch_size, max_seq_len, lr, warmup_fraction, weight_decay, seed,
          split_fraction, patience, max_answer_len, stop_after_steps, resume,
          single_thread) -> None:
    """Train a head and write checkpoints + metrics.csv into --out."""
    from .training import RunConfig, train as run_train

    try:
        if hidden_size == 0:
            hidden_size = _embeddings_h(embeddings)
        head_cfg = _head_config(head, hidden_size, kernel_widths, filters,
                                lstm_hidden, ctx_channels, gen_width,
                                apply_width, dropout_keep)
        cfg = RunConfig(
            head=head_cfg, squad_path=squad, embeddings=embeddings, out_dir=out,
            n_epochs=epochs, batch_size=batch_size, max_seq_len=max_seq_len,
            base_lr=lr, warmup_fraction=warmup_fraction, weight_decay=weight_decay,
            seed=seed, split_fraction=split_fraction, patience=patience,
            max_answer_len=max_answer_len, single_thread=single_thread,
        )
        summary = run_train(cfg, stop_after_steps=stop_after_steps or None,
                            resume=resume)
    except (SpanHeadError, OSError) as e:
        _fail(e)
    click.echo(json.dumps(summary, sort_keys=True))


@main.command()
@click.option("--checkpoint", required=True, help="Parameter checkpoint (.shlb).")
@click.option("--config", "config_path", required=True,
              help="config.json written by train (head section is used).")
@click.option("--squad", required=True, help="SQuAD 2.0 JSON file.")
@click.option("--embeddings", required=True,
              help='BEMB file or "synthetic:H,seed".')
@click.option("--out", required=True, help="Directory for predictions + null odds.")
@click.option("--max-seq-len", type=int, default=384, show_default=True)
@click.option("--max-answer-len", type=int, default=30, show_default=True)
@click.option("--single-thread", is_flag=True,
              help="Pin BLAS to one thread for bit-exact runs.")
def predict(checkpoint, config_path, squad, embeddings, out, max_seq_len,
            max_answer_len, single_thread) -> None:
    """Write predictions.json and null_odds.json for a dataset."""
    from .training import predict as run_predict

    try:
        with open(config_path, encoding="utf-8") as f:
            saved = json.load(f)
        head_cfg = HeadConfig.from_dict(saved["head"] if "head" in saved else saved)
        preds = run_predict(head_cfg, checkpoint, squad, embeddings, out,
                            max_seq_len=max_seq_len, max_answer_len=max_answer_len)
    except (SpanHeadError, OSError, KeyError, json.JSONDecodeError) as e:
        _fail(e)
    click.echo(f"wrote {len(preds)} predictions to {out}")


@main.command()
@click.option("--predictions", required=True, help="predictions.json from predict.")
@click.option("--null-odds", required=True, help="null_odds.json from predict.")
@click.option("--squad", required=True, help="SQuAD 2.0 JSON with gold answers.")
@click.option("--out", required=True, help="Directory for report.json.")
def evaluate(predictions, null_odds, squad, out) -> None:
    """Sweep the null threshold and report EM/F1 overall and per slice."""
    from .evaluator import EvalReport
    from .training import evaluate as run_evaluate

    try:
        result = run_evaluate(predictions, null_odds, squad, out)
    except (SpanHeadError, OSError, json.JSONDecodeError) as e:
        _fail(e)
    rep = EvalReport(**{k: result[k] for k in (
        "threshold", "overall_em", "overall_f1", "noans_em", "noans_f1",
        "hasans_em", "hasans_f1", "n_total", "n_noans", "n_hasans")})
    click.echo(rep.render())


if __name__ == "__main__":
    main()
