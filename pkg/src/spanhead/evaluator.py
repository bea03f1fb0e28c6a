"""EM/F1 scoring with answer normalization, span extraction, null sweep.

Scoring follows the standard SQuAD 2.0 conventions: answers are normalized
(lowercase, no punctuation, no articles, collapsed whitespace), EM is string
equality against any gold variant, F1 is token-bag overlap maximized over
golds, and unanswerable questions score 1 exactly when the prediction is
empty. The null decision is a threshold tau on score_diff = null_score -
best_nonnull_score: predict null iff score_diff > tau.
"""

from __future__ import annotations

import re
import string
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ParseError
from .heads import SpanLogits
from .squad_data import Feature, SquadExample

DEFAULT_MAX_ANSWER_LEN = 30
NO_SPAN_SCORE = float("-inf")

_ARTICLES_RE = re.compile(r"\b(a|an|the)\b", re.UNICODE)
_PUNCT = set(string.punctuation)


def normalize_answer(text: str) -> str:
    text = text.lower()
    text = "".join(ch for ch in text if ch not in _PUNCT)
    text = _ARTICLES_RE.sub(" ", text)
    return " ".join(text.split())


def _gold_texts(example: SquadExample) -> List[str]:
    if example.is_impossible:
        return []
    return [t for t, _ in example.answers]


def em_score(pred_text: str, gold_texts: Sequence[str]) -> int:
    pred = normalize_answer(pred_text)
    if not gold_texts:
        return int(pred == "")
    return max(int(pred == normalize_answer(g)) for g in gold_texts)


def f1_score(pred_text: str, gold_texts: Sequence[str]) -> float:
    pred_toks = normalize_answer(pred_text).split()
    if not gold_texts:
        return float(not pred_toks)
    best = 0.0
    for g in gold_texts:
        gold_toks = normalize_answer(g).split()
        if not gold_toks or not pred_toks:
            best = max(best, float(gold_toks == pred_toks))
            continue
        common = Counter(pred_toks) & Counter(gold_toks)
        n_common = sum(common.values())
        if n_common == 0:
            continue
        precision = n_common / len(pred_toks)
        recall = n_common / len(gold_toks)
        best = max(best, 2 * precision * recall / (precision + recall))
    return best


@dataclass
class Prediction:
    qid: str
    text: str                       # best non-null answer text ("" if none exists)
    best_nonnull_score: float       # -inf when no valid span exists
    null_score: float
    score_diff: float               # null_score - best_nonnull_score

    def final_text(self, tau: float) -> str:
        return "" if self.score_diff > tau else self.text


def extract_best_span(
    logits: SpanLogits,
    feature: Feature,
    max_answer_len: int = DEFAULT_MAX_ANSWER_LEN,
    valid_len: Optional[int] = None,
) -> Prediction:
    """Best (start, end) pair over context tokens only.

    Candidates satisfy context_start <= i <= j < context_end, j - i + 1 <=
    max_answer_len, and j < valid_len; ties break toward smaller i then
    smaller j. The null score always reads position 0. When no candidate
    exists (context fully truncated) the prediction degenerates to null with
    a -inf span score.
    """
    if max_answer_len < 1:
        raise ParseError(f"max_answer_len must be >= 1, got {max_answer_len}")
    start = np.asarray(logits.start_logits.data, dtype=np.float64)
    end = np.asarray(logits.end_logits.data, dtype=np.float64)
    if valid_len is None:
        valid_len = feature.valid_len

    null_score = float(start[0] + end[0])
    lo = feature.context_token_start
    hi = min(lo + feature.n_context_tokens, valid_len, start.shape[0])

    best_score = NO_SPAN_SCORE
    best_i = best_j = -1
    for i in range(lo, hi):
        j_cap = min(i + max_answer_len, hi)
        for j in range(i, j_cap):
            s = start[i] + end[j]
            if s > best_score:
                best_score = s
                best_i, best_j = i, j

    if best_i < 0:
        return Prediction(feature.qid, "", NO_SPAN_SCORE, null_score, float("inf"))

    c0 = feature.token_to_char[best_i - lo][0]
    c1 = feature.token_to_char[best_j - lo][1]
    text = feature.context[c0:c1]
    return Prediction(feature.qid, text, float(best_score), null_score,
                      null_score - float(best_score))


def _score_pair(pred: Prediction, golds: List[str], as_null: bool) -> Tuple[int, float]:
    text = "" if as_null else pred.text
    return em_score(text, golds), f1_score(text, golds)


def sweep_null_threshold(
    predictions: Sequence[Prediction], examples: Sequence[SquadExample]
) -> Tuple[float, float]:
    """Pick tau maximizing overall F1 under "null iff score_diff > tau".

    The grid is {-inf} plus every observed score_diff; walking it in
    ascending order flips predictions from null to answered one diff value
    at a time, so the whole sweep is a single O(n log n) pass. Ties prefer
    the smaller tau. Returns (tau, overall F1 percentage at tau).
    """
    if not predictions:
        raise ParseError("cannot sweep an empty prediction set")
    golds = {ex.qid: _gold_texts(ex) for ex in examples}
    missing = [p.qid for p in predictions if p.qid not in golds]
    if missing:
        raise ParseError(f"predictions without matching examples: {sorted(missing)}")

    f1_null = {}
    f1_ans = {}
    for p in predictions:
        f1_null[p.qid] = f1_score("", golds[p.qid])
        f1_ans[p.qid] = f1_score(p.text, golds[p.qid])

    total = sum(f1_null.values())  # tau = -inf: everything null
    best_tau, best_total = float("-inf"), total
    by_diff = sorted(predictions, key=lambda p: p.score_diff)
    k = 0
    n = len(by_diff)
    while k < n:
        tau = by_diff[k].score_diff
        while k < n and by_diff[k].score_diff == tau:
            p = by_diff[k]
            total += f1_ans[p.qid] - f1_null[p.qid]
            k += 1
        if total > best_total:
            best_total, best_tau = total, tau
    return best_tau, 100.0 * best_total / n


@dataclass
class EvalReport:
    threshold: float
    overall_em: float
    overall_f1: float
    noans_em: float
    noans_f1: float
    hasans_em: float
    hasans_f1: float
    n_total: int
    n_noans: int
    n_hasans: int

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "overall_em": self.overall_em,
            "overall_f1": self.overall_f1,
            "noans_em": self.noans_em,
            "noans_f1": self.noans_f1,
            "hasans_em": self.hasans_em,
            "hasans_f1": self.hasans_f1,
            "n_total": self.n_total,
            "n_noans": self.n_noans,
            "n_hasans": self.n_hasans,
        }

    def render(self) -> str:
        return (
            f"threshold tau = {self.threshold}\n"
            f"overall   EM = {self.overall_em:.2f}  F1 = {self.overall_f1:.2f}  (n={self.n_total})\n"
            f"no-answer EM = {self.noans_em:.2f}  F1 = {self.noans_f1:.2f}  (n={self.n_noans})\n"
            f"has-answer EM = {self.hasans_em:.2f}  F1 = {self.hasans_f1:.2f}  (n={self.n_hasans})"
        )


def report(
    predictions: Sequence[Prediction], examples: Sequence[SquadExample], tau: float
) -> EvalReport:
    """Apply the tau decision and aggregate EM/F1 overall and per slice."""
    preds = {p.qid: p for p in predictions}
    missing = [ex.qid for ex in examples if ex.qid not in preds]
    if missing:
        raise ParseError(f"missing predictions for question ids: {sorted(missing)}")

    em_no, f1_no, em_has, f1_has = [], [], [], []
    for ex in examples:
        p = preds[ex.qid]
        golds = _gold_texts(ex)
        text = p.final_text(tau)
        em = em_score(text, golds)
        f1 = f1_score(text, golds)
        if ex.is_impossible:
            em_no.append(em)
            f1_no.append(f1)
        else:
            em_has.append(em)
            f1_has.append(f1)

    def pct(vals: list) -> float:
        return 100.0 * sum(vals) / len(vals) if vals else 0.0

    n_no, n_has = len(em_no), len(em_has)
    return EvalReport(
        threshold=tau,
        overall_em=pct(em_no + em_has),
        overall_f1=pct(f1_no + f1_has),
        noans_em=pct(em_no),
        noans_f1=pct(f1_no),
        hasans_em=pct(em_has),
        hasans_f1=pct(f1_has),
        n_total=n_no + n_has,
        n_noans=n_no,
        n_hasans=n_has,
    )
