"""SQuAD 2.0 ingestion, featurization, splitting, batching, embeddings.

The pipeline is encoder-free: sequences are either embedded synthetically
(deterministic pseudo-random vectors, good enough to exercise every training
path at desk scale) or loaded from a BEMB file written offline by a real
frozen encoder. Tokenization here is a simple lowercase word/punctuation
splitter; when BEMB files are used, the per-record token counts in the file
govern sequence lengths.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
import struct
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .diffmath import Tensor
from .errors import FormatError, ParseError

CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"

BEMB_MAGIC = b"BEMB"
BEMB_VERSION = 1

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


@dataclass(frozen=True)
class SquadExample:
    qid: str
    title: str
    question: str
    context: str
    answers: Tuple[Tuple[str, int], ...]  # (text, char_start)
    is_impossible: bool


@dataclass(frozen=True)
class Feature:
    qid: str
    tokens: Tuple[str, ...]            # [CLS] q... [SEP] ctx... [SEP], unpadded
    valid_len: int
    max_seq_len: int
    context_token_start: int           # sequence index of the first context token
    n_context_tokens: int
    token_to_char: Tuple[Tuple[int, int], ...]  # per context token, chars in context
    start_pos: int                     # gold token indices into the sequence
    end_pos: int                       # (0, 0) for unanswerable / unlocatable
    context: str
    is_impossible: bool


@dataclass
class EmbeddedSequence:
    feature: Feature
    embeddings: Tensor                 # (max_seq_len, H); rows >= valid_len are zero
    valid_len: int


def tokenize(text: str) -> List[Tuple[str, int, int]]:
    """Lowercased word/punctuation tokens with offsets into the original."""
    return [(m.group(0).lower(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def _req(obj, key, path):
    try:
        return obj[key]
    except (KeyError, TypeError):
        raise ParseError(f"missing field at {path}.{key}") from None


def parse_squad_json(document: dict) -> List[SquadExample]:
    """Flatten the SQuAD 2.0 schema into one example per question."""
    examples: List[SquadExample] = []
    seen = set()
    data = _req(document, "data", "$")
    if not isinstance(data, list):
        raise ParseError("$.data must be an array")
    for ai, article in enumerate(data):
        apath = f"$.data[{ai}]"
        title = article.get("title", f"article-{ai}") if isinstance(article, dict) else None
        if title is None:
            raise ParseError(f"{apath} must be an object")
        for pi, para in enumerate(_req(article, "paragraphs", apath)):
            ppath = f"{apath}.paragraphs[{pi}]"
            context = _req(para, "context", ppath)
            if not isinstance(context, str):
                raise ParseError(f"{ppath}.context must be a string")
            for qi, qa in enumerate(_req(para, "qas", ppath)):
                qpath = f"{ppath}.qas[{qi}]"
                qid = _req(qa, "id", qpath)
                question = _req(qa, "question", qpath)
                if not isinstance(qid, str) or not isinstance(question, str):
                    raise ParseError(f"{qpath}: id and question must be strings")
                if qid in seen:
                    raise ParseError(f"{qpath}: duplicate question id {qid!r}")
                seen.add(qid)
                impossible = bool(qa.get("is_impossible", False))
                answers = []
                for ansi, a in enumerate(qa.get("answers", [])):
                    answers.append(
                        (
                            _req(a, "text", f"{qpath}.answers[{ansi}]"),
                            int(_req(a, "answer_start", f"{qpath}.answers[{ansi}]")),
                        )
                    )
                if not impossible and not answers:
                    raise ParseError(f"{qpath}: answerable question without answers")
                examples.append(
                    SquadExample(qid, title, question, context, tuple(answers), impossible)
                )
    return examples


def load_squad(path: str) -> List[SquadExample]:
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path} is not valid JSON: {e}") from None
    return parse_squad_json(doc)


def featurize(example: SquadExample, max_seq_len: int, training: bool) -> Optional[Feature]:
    """Concatenate question and context into one feature.

    Layout: [CLS] question [SEP] context [SEP], truncated to max_seq_len.
    Gold char spans map to the smallest covering token range. An answer that
    falls outside the truncated window yields None during training (the
    example can teach nothing) and a (0, 0) target during evaluation.
    """
    q_tokens = [t for t, _, _ in tokenize(example.question)]
    if len(q_tokens) > max_seq_len - 3:
        raise ParseError(
            f"question {example.qid!r} has {len(q_tokens)} tokens; "
            f"max_seq_len {max_seq_len} leaves room for {max_seq_len - 3}"
        )
    ctx_tokens = tokenize(example.context)
    budget = max_seq_len - 3 - len(q_tokens)
    ctx_tokens = ctx_tokens[:budget]

    tokens = [CLS_TOKEN] + q_tokens + [SEP_TOKEN] + [t for t, _, _ in ctx_tokens] + [SEP_TOKEN]
    context_token_start = 2 + len(q_tokens)
    token_to_char = tuple((s, e) for _, s, e in ctx_tokens)

    start_pos = end_pos = 0
    if not example.is_impossible and example.answers:
        text, char_start = example.answers[0]
        char_end = char_start + len(text)
        start_tok = end_tok = None
        for k, (s, e) in enumerate(token_to_char):
            if e > char_start and start_tok is None:
                start_tok = k
            if s < char_end:
                end_tok = k
        if start_tok is None or end_tok is None or end_tok < start_tok:
            if training:
                return None
        else:
            start_pos = context_token_start + start_tok
            end_pos = context_token_start + end_tok

    return Feature(
        qid=example.qid,
        tokens=tuple(tokens),
        valid_len=len(tokens),
        max_seq_len=max_seq_len,
        context_token_start=context_token_start,
        n_context_tokens=len(ctx_tokens),
        token_to_char=token_to_char,
        start_pos=start_pos,
        end_pos=end_pos,
        context=example.context,
        is_impossible=example.is_impossible,
    )


def split_train_eval(
    examples: Sequence[SquadExample], fraction: float, seed: int
) -> Tuple[List[SquadExample], List[SquadExample]]:
    """Deterministic article-level split: an article's questions never straddle
    the boundary, so no context appears on both sides."""
    if not 0.0 < fraction < 1.0:
        raise ParseError(f"split fraction must be in (0, 1), got {fraction}")
    by_title: Dict[str, List[SquadExample]] = {}
    for ex in examples:
        by_title.setdefault(ex.title, []).append(ex)
    titles = sorted(by_title)
    random.Random(seed).shuffle(titles)
    target = fraction * len(examples)
    eval_titles = set()
    eval_count = 0
    for title in titles:
        if eval_count < target:
            eval_titles.add(title)
            eval_count += len(by_title[title])
    train = [ex for ex in examples if ex.title not in eval_titles]
    eval_ = [ex for ex in examples if ex.title in eval_titles]
    return train, eval_


def _keyed_unit(key: str, seed: int, h: int) -> np.ndarray:
    digest = hashlib.blake2b(f"{seed}:{key}".encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    v = rng.standard_normal(h)
    return (v / np.linalg.norm(v)).astype(np.float32)


def _position_components(n_positions: int, h: int) -> np.ndarray:
    """Sinusoidal position vectors, each normalized then scaled to 0.1."""
    pos = np.arange(n_positions)[:, None]
    half = (h + 1) // 2
    angles = pos / np.power(10000.0, 2.0 * np.arange(half) / h)[None, :]
    pe = np.zeros((n_positions, 2 * half))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)
    pe = pe[:, :h]
    norms = np.linalg.norm(pe, axis=1, keepdims=True)
    return (0.1 * pe / norms).astype(np.float32)


def synthetic_embed(feature: Feature, h: int, seed: int) -> EmbeddedSequence:
    """Deterministic stand-in for a frozen encoder.

    row(t) = unit vector keyed by (token, seed)
           + 0.1-norm sinusoidal position vector
           + 0.1-norm segment offset (question side vs context side).
    Same token, same segment, different position -> rows differ only in the
    position term. Rows at or beyond valid_len stay zero.
    """
    if h < 8:
        raise ParseError(f"synthetic embedding width must be >= 8, got {h}")
    emb = np.zeros((feature.max_seq_len, h), dtype=np.float32)
    pos = _position_components(feature.valid_len, h)
    seg_vecs = (_keyed_unit("seg:0", seed, h) * 0.1, _keyed_unit("seg:1", seed, h) * 0.1)
    for t, token in enumerate(feature.tokens):
        segment = 0 if t < feature.context_token_start else 1
        emb[t] = _keyed_unit(f"tok:{token}", seed, h) + pos[t] + seg_vecs[segment]
    return EmbeddedSequence(feature, Tensor(emb), feature.valid_len)


def write_embeddings(path: str, records: Sequence[Tuple[str, np.ndarray]], h: int) -> None:
    """Write qid-keyed (L, H) float32 matrices in the BEMB layout."""
    with open(path, "wb") as f:
        f.write(BEMB_MAGIC)
        f.write(struct.pack("<II", BEMB_VERSION, h))
        for qid, mat in records:
            mat = np.ascontiguousarray(mat, dtype="<f4")
            if mat.ndim != 2 or mat.shape[1] != h:
                raise FormatError(f"record {qid!r} has shape {mat.shape}, expected (L, {h})")
            qid_bytes = qid.encode("utf-8")
            f.write(struct.pack("<I", len(qid_bytes)))
            f.write(qid_bytes)
            f.write(struct.pack("<I", mat.shape[0]))
            f.write(mat.tobytes(order="C"))


def read_embedding_records(path: str) -> Iterator[Tuple[str, np.ndarray]]:
    """Stream raw (qid, matrix) records, validating the header and lengths."""
    with open(path, "rb") as f:
        head = f.read(12)
        if len(head) < 12 or head[:4] != BEMB_MAGIC:
            raise FormatError(f"{path}: not a BEMB file (bad magic)")
        version, h = struct.unpack("<II", head[4:12])
        if version != BEMB_VERSION:
            raise FormatError(f"{path}: unsupported BEMB version {version}")
        if h < 1:
            raise FormatError(f"{path}: invalid embedding width {h}")
        while True:
            raw = f.read(4)
            if not raw:
                return
            if len(raw) < 4:
                raise FormatError(f"{path}: truncated record header")
            (qid_len,) = struct.unpack("<I", raw)
            qid_bytes = f.read(qid_len)
            if len(qid_bytes) < qid_len:
                raise FormatError(f"{path}: truncated qid")
            qid = qid_bytes.decode("utf-8")
            raw = f.read(4)
            if len(raw) < 4:
                raise FormatError(f"{path}: truncated record {qid!r}")
            (n_rows,) = struct.unpack("<I", raw)
            payload = f.read(n_rows * h * 4)
            if len(payload) < n_rows * h * 4:
                raise FormatError(f"{path}: truncated data for record {qid!r}")
            yield qid, np.frombuffer(payload, dtype="<f4").reshape(n_rows, h)


def bemb_width(path: str) -> int:
    with open(path, "rb") as f:
        head = f.read(12)
    if len(head) < 12 or head[:4] != BEMB_MAGIC:
        raise FormatError(f"{path}: not a BEMB file (bad magic)")
    version, h = struct.unpack("<II", head[4:12])
    if version != BEMB_VERSION:
        raise FormatError(f"{path}: unsupported BEMB version {version}")
    return h


def load_embeddings(
    path: str, features: Dict[str, Feature], expected_h: int
) -> Iterator[EmbeddedSequence]:
    """Match BEMB records to features by qid.

    The file's per-record row count wins over this package's tokenization
    (the exporter may tokenize differently): valid_len becomes
    min(record rows, max_seq_len) and surplus rows are dropped.
    """
    for qid, mat in read_embedding_records(path):
        if mat.shape[1] != expected_h:
            raise FormatError(
                f"{path}: embedding width {mat.shape[1]} != configured {expected_h}"
            )
        if qid not in features:
            raise FormatError(f"{path}: record {qid!r} matches no known question id")
        if not np.all(np.isfinite(mat)):
            raise FormatError(f"{path}: non-finite values in record {qid!r}")
        feat = features[qid]
        valid_len = min(mat.shape[0], feat.max_seq_len)
        emb = np.zeros((feat.max_seq_len, expected_h), dtype=np.float32)
        emb[:valid_len] = mat[:valid_len]
        yield EmbeddedSequence(feat, Tensor(emb), valid_len)


def batches(items: Sequence, batch_size: int, seed: int, epoch: int) -> Iterator[list]:
    """Shuffled by (seed, epoch); the final short batch is emitted."""
    if batch_size < 1:
        raise ParseError(f"batch_size must be >= 1, got {batch_size}")
    order = list(range(len(items)))
    random.Random(f"{seed}:{epoch}").shuffle(order)
    for i in range(0, len(order), batch_size):
        yield [items[k] for k in order[i : i + batch_size]]
