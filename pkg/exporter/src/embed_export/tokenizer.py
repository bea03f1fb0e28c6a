"""Self-contained WordPiece-style tokenizer for the offline encoder mode.

Pretrained checkpoints bring their own tokenizer; the untrained mode has no
vocabulary to download, so it builds one from the corpus being exported:
every word type plus every character (as both a start piece and a "##"
continuation). Greedy longest-prefix matching then tokenizes any string,
known or not, without [UNK] for plain text.
"""

from __future__ import annotations

import re
from typing import Dict, Iterable, List

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
SPECIALS = (PAD, UNK, CLS, SEP)

_BASIC_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def basic_split(text: str) -> List[str]:
    return [m.group(0).lower() for m in _BASIC_RE.finditer(text)]


class WordPieceVocab:
    def __init__(self, pieces: Iterable[str]):
        self.id_of: Dict[str, int] = {}
        for piece in (*SPECIALS, *pieces):
            if piece not in self.id_of:
                self.id_of[piece] = len(self.id_of)

    def __len__(self) -> int:
        return len(self.id_of)

    @classmethod
    def from_corpus(cls, texts: Iterable[str]) -> "WordPieceVocab":
        words = set()
        chars = set()
        for text in texts:
            for w in basic_split(text):
                words.add(w)
                chars.update(w)
        pieces = sorted(words)
        pieces += sorted(chars)
        pieces += sorted("##" + c for c in chars)
        return cls(pieces)

    def wordpiece(self, word: str) -> List[str]:
        """Greedy longest-prefix split; [UNK] only if no prefix matches."""
        pieces: List[str] = []
        start = 0
        while start < len(word):
            end = len(word)
            prefix = "##" if start else ""
            while end > start:
                cand = prefix + word[start:end]
                if cand in self.id_of:
                    pieces.append(cand)
                    break
                end -= 1
            else:
                return [UNK]
            start = end
        return pieces or [UNK]

    def tokenize(self, text: str) -> List[int]:
        ids: List[int] = []
        for word in basic_split(text):
            ids.extend(self.id_of[p] for p in self.wordpiece(word))
        return ids
