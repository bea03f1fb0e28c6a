"""Shared fixtures: small SQuAD-style documents and head configs."""

from __future__ import annotations

import json

import pytest

from spanhead.heads import HeadConfig


def squad_doc(articles) -> dict:
    """articles: [(title, context, [(qid, question, answer_or_None), ...])]"""
    data = []
    for title, context, qas in articles:
        entry = {"title": title, "paragraphs": [{"context": context, "qas": []}]}
        for qid, question, answer in qas:
            qa = {
                "id": qid,
                "question": question,
                "is_impossible": answer is None,
                "answers": [],
            }
            if answer is not None:
                qa["answers"] = [{"text": answer, "answer_start": context.index(answer)}]
            entry["paragraphs"][0]["qas"].append(qa)
        data.append(entry)
    return {"version": "v2.0", "data": data}


EIGHT_EXAMPLES = [
    ("Planets", "Mars orbits beyond earth and shines with a red glow at night.",
     [("p1", "Which planet shines with a red glow?", "Mars"),
      ("p2", "Who named the telescope?", None)]),
    ("Oceans", "The pacific ocean holds the mariana trench near guam island.",
     [("o1", "What does the pacific ocean hold?", "the mariana trench"),
      ("o2", "When was the submarine invented?", None)]),
    ("Music", "A violin sings sweetly while the heavy drum keeps steady time.",
     [("u1", "What keeps steady time?", "the heavy drum"),
      ("u2", "Why do pianos have pedals?", None)]),
    ("Food", "Fresh bread bakes golden inside the old stone oven every morning.",
     [("f1", "Where does fresh bread bake?", "inside the old stone oven"),
      ("f2", "How much sugar goes into jam?", None)]),
]


@pytest.fixture
def eight_example_path(tmp_path):
    """Mixed answerable/impossible dataset: 4 articles, 8 questions."""
    p = tmp_path / "eight.json"
    p.write_text(json.dumps(squad_doc(EIGHT_EXAMPLES)))
    return str(p)


def desk_config(variant: str, h: int = 16) -> HeadConfig:
    """Small-but-representative dimensions for fast tests."""
    return HeadConfig(
        variant=variant,
        hidden_size=h,
        kernel_widths=(3, 5),
        filters_per_kernel=6,
        lstm_hidden=8,
        context_out_channels=4,
        generator_width=3,
        applied_width=3,
        dropout_keep_prob=1.0,
    )
