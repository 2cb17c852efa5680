"""Token vocabulary with reserved control tokens.

Ids 0..3 are pinned: <pad>, <bos>, <eos>, <Unk>. Lookup of any token outside
the vocabulary falls back to <Unk>.
"""

from __future__ import annotations

from collections import Counter
from typing import Iterable

from .errors import ConfigError

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<Unk>"
RESERVED = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3


class Vocabulary:
    """Bijection between non-reserved tokens and ids 4..len-1."""

    def __init__(self, tokens: list[str]):
        if tuple(tokens[:4]) != RESERVED:
            raise ConfigError(f"vocabulary must start with the reserved tokens {RESERVED}")
        if len(set(tokens)) != len(tokens):
            raise ConfigError("vocabulary tokens must be unique")
        self._tokens = list(tokens)
        self._ids = {tok: i for i, tok in enumerate(self._tokens)}

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id_of(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def token_of(self, idx: int) -> str:
        return self._tokens[idx]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.id_of(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self._tokens[i] for i in ids]

    def to_list(self) -> list[str]:
        return list(self._tokens)

    @classmethod
    def from_list(cls, tokens: list[str]) -> "Vocabulary":
        return cls(tokens)


def build_vocab(streams: Iterable[Iterable[str]], max_size: int) -> Vocabulary:
    """Keep the most frequent tokens, ties broken lexicographically.

    ``max_size`` counts the four reserved tokens, so it must exceed 4.
    """
    if max_size <= 4:
        raise ConfigError(f"max_size must exceed the 4 reserved tokens, got {max_size}")
    counts = Counter()
    for stream in streams:
        counts.update(t for t in stream if t not in RESERVED)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [tok for tok, _ in ranked[:max_size - 4]]
    return Vocabulary(list(RESERVED) + kept)
