"""Token vocabulary with fixed reserved ids."""

from __future__ import annotations

from pathlib import Path

from .corpus import Conversation, atomic_write_text
from .errors import DataError

PAD_ID = 0
UNK_ID = 1
BOS_ID = 2
EOS_ID = 3
RESERVED_TOKENS = ("<pad>", "<unk>", "<bos>", "<eos>")


class TokenVocab:
    """Bidirectional token <-> id map; ids 0-3 are reserved."""

    def __init__(self, tokens: list[str]):
        if list(tokens[:4]) != list(RESERVED_TOKENS):
            raise DataError(f"vocabulary must start with {RESERVED_TOKENS}")
        self.tokens = list(tokens)
        self.index: dict[str, int] = {}
        for i, tok in enumerate(self.tokens):
            if tok in self.index:
                raise DataError(f"duplicate token '{tok}' in vocabulary")
            self.index[tok] = i

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def id_of(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.index.get(t, UNK_ID) for t in tokens]

    def token_of(self, token_id: int) -> str:
        return self.tokens[token_id]

    @classmethod
    def from_tokens(cls, tokens) -> "TokenVocab":
        seen = dict.fromkeys(RESERVED_TOKENS)
        for t in tokens:
            if t not in seen:
                seen[t] = None
        return cls(list(seen))

    @classmethod
    def from_conversations(cls, conversations: list[Conversation]) -> "TokenVocab":
        def stream():
            for conv in conversations:
                for u in conv.utterances:
                    yield from u.tokens
        return cls.from_tokens(stream())

    def save(self, path: str | Path) -> None:
        """One non-reserved token per line; line number = id - 4."""
        atomic_write_text(path, "\n".join(self.tokens[4:]) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TokenVocab":
        with open(path, encoding="utf-8") as f:
            body = [line.rstrip("\n") for line in f if line.rstrip("\n")]
        return cls(list(RESERVED_TOKENS) + body)
