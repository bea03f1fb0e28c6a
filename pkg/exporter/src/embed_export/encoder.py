"""Frozen encoder wrapper: a pretrained checkpoint or a seeded untrained stack.

Model ids of the form "untrained:<layers>x<hidden>" build a randomly
initialized encoder with a fixed seed derived from the id, so exports are
reproducible without downloading weights. Any other id goes through the
usual pretrained-checkpoint loader.
"""

from __future__ import annotations

import hashlib
import re
from typing import Callable, List, Sequence, Tuple

import numpy as np
import torch

from .errors import ExportError
from .tokenizer import WordPieceVocab

_UNTRAINED_RE = re.compile(r"^untrained:(\d+)x(\d+)$")


def parse_untrained(model_id: str):
    """(layers, hidden) for untrained ids, None for checkpoint names."""
    m = _UNTRAINED_RE.match(model_id)
    if m is None:
        if model_id.startswith("untrained:"):
            raise ExportError(
                f'model id {model_id!r} is not of the form "untrained:<layers>x<hidden>"'
            )
        return None
    layers, hidden = int(m.group(1)), int(m.group(2))
    if layers < 1:
        raise ExportError(f"untrained model needs at least 1 layer, got {layers}")
    if hidden < 64 or hidden % 64:
        raise ExportError(
            f"untrained hidden size must be a positive multiple of 64, got {hidden}"
        )
    return layers, hidden


def _stable_seed(model_id: str) -> int:
    digest = hashlib.blake2b(model_id.encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "little")


class FrozenEncoder:
    """Tokenization plus batched no-grad forward passes, final layer only."""

    def __init__(self, model, tokenize: Callable[[str], List[int]],
                 cls_id: int, sep_id: int, pad_id: int, hidden: int):
        self._model = model.eval()
        self._tokenize = tokenize
        self.cls_id = cls_id
        self.sep_id = sep_id
        self.pad_id = pad_id
        self.hidden = hidden

    @classmethod
    def untrained(cls, layers: int, hidden: int, corpus: Sequence[str],
                  max_seq_len: int, model_id: str) -> "FrozenEncoder":
        from transformers import BertConfig, BertModel

        vocab = WordPieceVocab.from_corpus(corpus)
        config = BertConfig(
            vocab_size=len(vocab),
            hidden_size=hidden,
            num_hidden_layers=layers,
            num_attention_heads=hidden // 64,
            intermediate_size=4 * hidden,
            max_position_embeddings=max(512, max_seq_len),
        )
        torch.manual_seed(_stable_seed(model_id))
        model = BertModel(config)
        return cls(model, vocab.tokenize, vocab.id_of["[CLS]"],
                   vocab.id_of["[SEP]"], vocab.id_of["[PAD]"], hidden)

    @classmethod
    def pretrained(cls, model_id: str) -> "FrozenEncoder":
        from transformers import AutoModel, AutoTokenizer

        try:
            tokenizer = AutoTokenizer.from_pretrained(model_id)
            model = AutoModel.from_pretrained(model_id)
        except Exception as e:
            raise ExportError(f"model load failure for {model_id!r}: {e}") from None

        def tokenize(text: str) -> List[int]:
            return tokenizer.convert_tokens_to_ids(tokenizer.tokenize(text))

        return cls(model, tokenize, tokenizer.cls_token_id,
                   tokenizer.sep_token_id, tokenizer.pad_token_id,
                   model.config.hidden_size)

    def encode_pair(self, qid: str, question: str, context: str,
                    max_seq_len: int) -> Tuple[List[int], List[int]]:
        """[CLS] question [SEP] context [SEP] ids and segment ids.

        The context is truncated to fit; a question that leaves no room at
        all is an error tied to its qid.
        """
        q_ids = self._tokenize(question)
        budget = max_seq_len - 3 - len(q_ids)
        if budget < 0:
            raise ExportError(
                f"question {qid!r} occupies {len(q_ids)} tokens; "
                f"max_seq_len {max_seq_len} leaves no room for context"
            )
        c_ids = self._tokenize(context)[:budget]
        ids = [self.cls_id, *q_ids, self.sep_id, *c_ids, self.sep_id]
        type_ids = [0] * (2 + len(q_ids)) + [1] * (len(c_ids) + 1)
        return ids, type_ids

    def forward(self, batch: Sequence[Tuple[List[int], List[int]]]) -> List[np.ndarray]:
        """Final-layer embeddings per sequence, padding rows stripped."""
        lengths = [len(ids) for ids, _ in batch]
        width = max(lengths)
        input_ids = torch.full((len(batch), width), self.pad_id, dtype=torch.long)
        type_ids = torch.zeros((len(batch), width), dtype=torch.long)
        mask = torch.zeros((len(batch), width), dtype=torch.long)
        for row, (ids, tts) in enumerate(batch):
            input_ids[row, : len(ids)] = torch.tensor(ids, dtype=torch.long)
            type_ids[row, : len(tts)] = torch.tensor(tts, dtype=torch.long)
            mask[row, : len(ids)] = 1
        with torch.no_grad():
            out = self._model(input_ids=input_ids, token_type_ids=type_ids,
                              attention_mask=mask)
        hidden = out.last_hidden_state.to(torch.float32).numpy()
        return [hidden[row, :n].copy() for row, n in enumerate(lengths)]
