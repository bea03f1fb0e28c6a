"""Orchestration: featurize, batch through the encoder, write file + manifest."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

from .bemb import read_header, write_bemb
from .encoder import FrozenEncoder, parse_untrained
from .errors import ExportError
from .squad import read_squad

DEFAULT_MODEL = "bert-base-uncased"


@dataclass
class ExportManifest:
    model: str
    h: int
    max_seq_len: int
    qids: List[str]
    checksum: str

    def to_dict(self) -> dict:
        return {"model": self.model, "h": self.h, "max_seq_len": self.max_seq_len,
                "qids": self.qids, "checksum": self.checksum}


def manifest_path(out_path: str) -> str:
    return out_path + ".manifest.json"


def export(squad_json: str, out_path: str, model_id: str = DEFAULT_MODEL,
           max_seq_len: int = 384, batch_size: int = 8) -> ExportManifest:
    """Embed every question+context pair and write a BEMB file.

    Records appear in dataset order, one per question, holding the final
    encoder layer for the [CLS] question [SEP] context [SEP] sequence
    (context truncated to max_seq_len). A manifest JSON lands next to the
    output. Everything is deterministic for a fixed model and input, so
    re-exporting produces a byte-identical file.
    """
    if max_seq_len < 8:
        raise ExportError(f"max_seq_len must be >= 8, got {max_seq_len}")
    if batch_size < 1:
        raise ExportError(f"batch_size must be >= 1, got {batch_size}")

    questions = read_squad(squad_json)
    if not questions:
        raise ExportError(f"{squad_json}: no questions to export")

    dims = parse_untrained(model_id)
    if dims is not None:
        corpus = [q.question for q in questions] + [q.context for q in questions]
        encoder = FrozenEncoder.untrained(dims[0], dims[1], corpus,
                                          max_seq_len, model_id)
    else:
        encoder = FrozenEncoder.pretrained(model_id)

    encoded = [
        (q.qid, encoder.encode_pair(q.qid, q.question, q.context, max_seq_len))
        for q in questions
    ]

    records: List[Tuple[str, "object"]] = []
    for i in range(0, len(encoded), batch_size):
        chunk = encoded[i : i + batch_size]
        for (qid, _), mat in zip(chunk, encoder.forward([e for _, e in chunk])):
            records.append((qid, mat))

    write_bemb(out_path, records, encoder.hidden)
    header_h = read_header(out_path)

    checksum = "sha256:" + hashlib.sha256(Path(out_path).read_bytes()).hexdigest()
    manifest = ExportManifest(model=model_id, h=header_h, max_seq_len=max_seq_len,
                              qids=[qid for qid, _ in records], checksum=checksum)
    Path(manifest_path(out_path)).write_text(
        json.dumps(manifest.to_dict(), sort_keys=True, indent=2) + "\n"
    )
    return manifest
