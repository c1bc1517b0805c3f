"""Segment, tag, mix, shuffle, pack, and split corpus text into token blocks.

The stream contract, end to end: every document's text ends with exactly
one separator token; bitext documents are expanded to "[en] .. [ga] .."
tagged form; bitext comes before all monolingual text (each group shuffled
under its own derived seed); the token stream is packed into fixed-size
blocks with the trailing remainder dropped and counted; block-level split
assignment realizes the requested train/validation/test ratio.

Everything downstream of the manifest is a pure function of (documents,
plan), so identical seeds give byte-identical outputs.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .records import Document, UsageError, derive_seed
from .tokenizers import END_OF_DOC, TokenizerError

SPLIT_NAMES = ("train", "validation", "test")
MIN_BLOCKS_FOR_SPLIT = 34  # below this, 3% buckets round to nothing meaningful


@dataclass(frozen=True)
class MixPlan:
    seed: int
    block_size: int = 2048
    split_ratio: tuple[int, int, int] = (94, 3, 3)
    separator: str = END_OF_DOC
    bitext_first: bool = True

    def __post_init__(self):
        if self.block_size < 1:
            raise UsageError("block_size must be >= 1")
        if len(self.split_ratio) != 3 or any(r <= 0 for r in self.split_ratio):
            raise UsageError("split_ratio needs three positive components")
        if sum(self.split_ratio) != 100:
            raise UsageError("split_ratio components must sum to 100")
        if not self.separator:
            raise UsageError("separator must be non-empty")

    @classmethod
    def from_file(cls, path: str | Path) -> "MixPlan":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            seed=int(obj["seed"]),
            block_size=int(obj.get("block_size", 2048)),
            split_ratio=tuple(obj.get("split_ratio", (94, 3, 3))),
            separator=obj.get("separator", END_OF_DOC),
            bitext_first=bool(obj.get("bitext_first", True)),
        )


@dataclass(frozen=True)
class SegmentedDoc:
    doc_id: str
    source_id: str
    lang: str
    text: str  # ends with exactly one separator


@dataclass(frozen=True)
class RejectedDoc:
    doc_id: str
    reason: str


def segment(
    documents: Iterable[Document], separator: str = END_OF_DOC
) -> tuple[list[SegmentedDoc], list[RejectedDoc]]:
    """Terminate every document with the separator; tag bitext sides.

    A document already containing the separator literal is rejected (the
    separator must be reserved), as is a bitext document that is not a
    single en<TAB>ga pair. Rejections never abort the stream.
    """
    kept: list[SegmentedDoc] = []
    rejected: list[RejectedDoc] = []
    for doc in documents:
        if separator in doc.text:
            rejected.append(RejectedDoc(doc.id, "contains separator literal"))
            continue
        if doc.lang == "bitext":
            sides = doc.text.split("\t")
            if len(sides) != 2:
                rejected.append(RejectedDoc(doc.id, "bitext text is not one en<TAB>ga pair"))
                continue
            body = f"[en] {sides[0]}\n[ga] {sides[1]}"
        else:
            body = doc.text
        kept.append(
            SegmentedDoc(doc_id=doc.id, source_id=doc.source_id, lang=doc.lang,
                         text=f"{body}\n{separator}")
        )
    return kept, rejected


def mix_and_shuffle(docs: Iterable[SegmentedDoc], plan: MixPlan) -> list[SegmentedDoc]:
    """Bitext first (own shuffle), then one shuffle of all monolingual docs."""
    bitext = [d for d in docs if d.lang == "bitext"]
    mono = [d for d in docs if d.lang != "bitext"]
    if plan.bitext_first:
        random.Random(derive_seed(plan.seed, "bitext")).shuffle(bitext)
        random.Random(derive_seed(plan.seed, "mono")).shuffle(mono)
        return bitext + mono
    merged = bitext + mono
    random.Random(derive_seed(plan.seed, "mono")).shuffle(merged)
    return merged


@dataclass
class PackStats:
    total_tokens: int = 0
    emitted_blocks: int = 0
    emitted_tokens: int = 0
    dropped_tokens: int = 0
    docs_packed: int = 0
    docs_skipped: int = 0
    separators_emitted: int = 0
    skipped_doc_ids: list[str] = field(default_factory=list)


def pack(
    docs: Iterable[SegmentedDoc], tokenizer, plan: MixPlan
) -> tuple[list[list[int]], PackStats]:
    """Concatenate tokenized documents into blocks of exactly block_size.

    The trailing remainder shorter than a block is dropped, not padded, and
    counted so that emitted + dropped = total input tokens exactly.
    """
    stats = PackStats()
    blocks: list[list[int]] = []
    buffer: list[int] = []
    for doc in docs:
        try:
            ids = tokenizer.encode(doc.text)
        except TokenizerError:
            stats.docs_skipped += 1
            stats.skipped_doc_ids.append(doc.doc_id)
            continue
        stats.docs_packed += 1
        stats.total_tokens += len(ids)
        buffer.extend(ids)
        while len(buffer) >= plan.block_size:
            block = buffer[: plan.block_size]
            buffer = buffer[plan.block_size :]
            blocks.append(block)
            stats.emitted_blocks += 1
            stats.emitted_tokens += plan.block_size
            stats.separators_emitted += sum(
                1 for t in block if t == tokenizer.separator_id
            )
    stats.dropped_tokens = len(buffer)
    return blocks, stats


@dataclass
class SplitStats:
    counts: dict[str, int]
    fractions: dict[str, float]
    warning: str | None = None


def _apportion(n: int, ratio: tuple[int, int, int]) -> list[int]:
    # largest-remainder so bucket counts always sum to n
    total = sum(ratio)
    quotas = [n * r / total for r in ratio]
    counts = [int(q) for q in quotas]
    remainders = sorted(range(3), key=lambda i: quotas[i] - counts[i], reverse=True)
    for i in remainders[: n - sum(counts)]:
        counts[i] += 1
    return counts


def split(
    blocks: list[list[int]], plan: MixPlan
) -> tuple[dict[str, list[list[int]]], SplitStats]:
    """Assign whole blocks to train/validation/test by seeded shuffle."""
    n = len(blocks)
    counts = _apportion(n, plan.split_ratio)
    order = list(range(n))
    random.Random(derive_seed(plan.seed, "split")).shuffle(order)
    assigned: dict[str, list[list[int]]] = {name: [] for name in SPLIT_NAMES}
    cursor = 0
    for name, count in zip(SPLIT_NAMES, counts):
        for idx in sorted(order[cursor : cursor + count]):
            assigned[name].append(blocks[idx])
        cursor += count
    stats = SplitStats(
        counts={name: len(assigned[name]) for name in SPLIT_NAMES},
        fractions={name: (len(assigned[name]) / n if n else 0.0) for name in SPLIT_NAMES},
    )
    if n < MIN_BLOCKS_FOR_SPLIT:
        stats.warning = (
            f"only {n} blocks; a {'/'.join(map(str, plan.split_ratio))} split "
            "cannot be realized meaningfully"
        )
    return assigned, stats


def write_blocks(out_dir: str | Path, assigned: dict[str, list[list[int]]]) -> dict[str, str]:
    """Fixed-record binary per split: block_size x uint32 little-endian."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name in SPLIT_NAMES:
        path = out_dir / f"{name}.bin"
        arr = np.array(assigned[name], dtype="<u4")
        arr.tofile(path)
        paths[name] = str(path)
    return paths


def read_blocks(path: str | Path, block_size: int) -> list[list[int]]:
    arr = np.fromfile(path, dtype="<u4")
    if arr.size % block_size:
        raise UsageError(f"{path} is not a whole number of {block_size}-token blocks")
    return [list(map(int, row)) for row in arr.reshape(-1, block_size)]
