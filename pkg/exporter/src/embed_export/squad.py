"""Minimal SQuAD 2.0 reader: the exporter only needs (qid, question, context)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List

from .errors import ExportError


@dataclass(frozen=True)
class Question:
    qid: str
    question: str
    context: str


def read_squad(path: str) -> List[Question]:
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as e:
        raise ExportError(f"cannot read {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ExportError(f"{path} is not valid JSON: {e}") from None

    try:
        articles = doc["data"]
    except (KeyError, TypeError):
        raise ExportError(f"{path}: missing top-level 'data' array") from None

    out: List[Question] = []
    seen = set()
    for article in articles:
        for para in article.get("paragraphs", []):
            context = para.get("context")
            if not isinstance(context, str):
                raise ExportError(f"{path}: paragraph without a string context")
            for qa in para.get("qas", []):
                qid = qa.get("id")
                question = qa.get("question")
                if not isinstance(qid, str) or not isinstance(question, str):
                    raise ExportError(f"{path}: qa entry without string id/question")
                if qid in seen:
                    raise ExportError(f"{path}: duplicate question id {qid!r}")
                seen.add(qid)
                out.append(Question(qid, question, context))
    return out
