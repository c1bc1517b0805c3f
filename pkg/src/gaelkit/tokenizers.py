"""Tokenizers for the packing pipeline.

Packing correctness is token-identity-agnostic, so the built-ins are a
whitespace tokenizer (ids assigned first-seen, deterministic for a fixed
stream) and a byte tokenizer. A production vocabulary can be loaded from a
JSON token->id mapping. All tokenizers map the document separator string
to one reserved id so block accounting can find document boundaries.
"""

from __future__ import annotations

import json
from pathlib import Path

from .records import UsageError

END_OF_DOC = "<|endoftext|>"


class TokenizerError(RuntimeError):
    """Raised when a document cannot be tokenized."""


class _SeparatorAware:
    """Shared separator splitting: occurrences map to separator_id."""

    separator: str
    separator_id: int

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        segments = text.split(self.separator)
        for i, segment in enumerate(segments):
            if i:
                ids.append(self.separator_id)
            ids.extend(self._encode_segment(segment))
        return ids

    def _encode_segment(self, segment: str) -> list[int]:
        raise NotImplementedError


class WhitespaceTokenizer(_SeparatorAware):
    """Whitespace-delimited tokens, ids assigned in first-seen order."""

    def __init__(self, separator: str = END_OF_DOC):
        self.separator = separator
        self.separator_id = 0
        self._vocab: dict[str, int] = {separator: 0}

    def _encode_segment(self, segment: str) -> list[int]:
        ids = []
        for token in segment.split():
            token_id = self._vocab.get(token)
            if token_id is None:
                token_id = len(self._vocab)
                self._vocab[token] = token_id
            ids.append(token_id)
        return ids

    @property
    def vocab_size(self) -> int:
        return len(self._vocab)


class ByteTokenizer(_SeparatorAware):
    """UTF-8 bytes as ids 0..255; separator gets the reserved id 256."""

    def __init__(self, separator: str = END_OF_DOC):
        self.separator = separator
        self.separator_id = 256

    def _encode_segment(self, segment: str) -> list[int]:
        return list(segment.encode("utf-8"))


class VocabTokenizer(_SeparatorAware):
    """External whitespace-token vocabulary with an unknown-token id."""

    def __init__(self, vocab: dict[str, int], unk_id: int, separator: str = END_OF_DOC):
        if separator not in vocab:
            raise UsageError("vocabulary must assign an id to the separator token")
        self.separator = separator
        self.separator_id = vocab[separator]
        self.unk_id = unk_id
        self._vocab = dict(vocab)

    @classmethod
    def from_file(cls, path: str | Path, unk_id: int | None = None,
                  separator: str = END_OF_DOC) -> "VocabTokenizer":
        vocab = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(vocab, dict):
            raise UsageError("vocabulary file must hold a JSON object of token -> id")
        if unk_id is None:
            unk = vocab.get("<unk>")
            if unk is None:
                raise UsageError("no <unk> entry in vocabulary and no unk_id given")
            unk_id = int(unk)
        return cls({k: int(v) for k, v in vocab.items()}, unk_id=unk_id, separator=separator)

    def _encode_segment(self, segment: str) -> list[int]:
        return [self._vocab.get(token, self.unk_id) for token in segment.split()]


def build_tokenizer(name: str, separator: str = END_OF_DOC, vocab_path: str | None = None):
    if name == "whitespace":
        return WhitespaceTokenizer(separator)
    if name == "byte":
        return ByteTokenizer(separator)
    if name == "vocab":
        if not vocab_path:
            raise UsageError("tokenizer 'vocab' requires a vocabulary file path")
        return VocabTokenizer.from_file(vocab_path, separator=separator)
    raise UsageError(f"unknown tokenizer '{name}' (use whitespace, byte, or vocab)")
