"""Containment measurement between corpus sources.

A source is represented by the set of distinct 64-bit hashes of its
width-token shingles after normalization (lower-case, punctuation and
symbol characters deleted, whitespace tokenization). Containment of A in B
is |shingles(A) ∩ shingles(B)| / |shingles(A)|: the fraction of A's unique
n-grams already present in B. The measure is directional; callers wanting
the classic "is the smaller source inside the larger" reading should pass
the smaller source first.

Shingle sets persist as sorted uint64 arrays (little-endian ``.u64``
files), so merging and intersecting stream without rehashing the corpus.
"""

from __future__ import annotations

import sys
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .records import UsageError, stable_key_int

DEFAULT_WIDTH = 5

_PUNCT_CACHE: dict[str, bool] = {}


def _is_punct(ch: str) -> bool:
    hit = _PUNCT_CACHE.get(ch)
    if hit is None:
        hit = unicodedata.category(ch)[0] in ("P", "S")
        _PUNCT_CACHE[ch] = hit
    return hit


def normalize(text: str) -> list[str]:
    """Lower-case, delete punctuation/symbol characters, split on whitespace.

    "Punctuation" is Unicode general categories P* and S*, a locale-free
    rule. Idempotent: renormalizing the joined token list is a no-op.
    """
    lowered = text.lower()
    cleaned = "".join(ch for ch in lowered if not _is_punct(ch))
    return cleaned.split()


def shingle_hashes(tokens: list[str], width: int = DEFAULT_WIDTH) -> set[int]:
    """Distinct 64-bit hashes of every consecutive ``width``-token window."""
    if width < 1:
        raise UsageError("shingle width must be >= 1")
    if len(tokens) < width:
        return set()
    return {
        stable_key_int(tokens[i : i + width]) for i in range(len(tokens) - width + 1)
    }


@dataclass(frozen=True)
class ShingleSet:
    """Shingle hashes of one source or document."""

    owner: str
    width: int
    hashes: frozenset[int]

    @classmethod
    def from_text(cls, owner: str, text: str, width: int = DEFAULT_WIDTH) -> "ShingleSet":
        return cls(owner=owner, width=width, hashes=frozenset(shingle_hashes(normalize(text), width)))

    @classmethod
    def from_texts(cls, owner: str, texts: Iterable[str], width: int = DEFAULT_WIDTH) -> "ShingleSet":
        merged: set[int] = set()
        for text in texts:
            merged |= shingle_hashes(normalize(text), width)
        return cls(owner=owner, width=width, hashes=frozenset(merged))

    def save(self, path: str | Path) -> None:
        arr = np.array(sorted(self.hashes), dtype="<u8")
        arr.tofile(path)

    @classmethod
    def load(cls, owner: str, path: str | Path, width: int = DEFAULT_WIDTH) -> "ShingleSet":
        arr = np.fromfile(path, dtype="<u8")
        return cls(owner=owner, width=width, hashes=frozenset(int(v) for v in arr))


@dataclass(frozen=True)
class ContainmentReport:
    """Directional containment of source ``a`` inside source ``b``."""

    a: str
    b: str
    containment: float
    size_a: int
    intersection: int
    empty_a: bool = False


def containment(a: ShingleSet, b: ShingleSet) -> ContainmentReport:
    """Containment of a in b per |A∩B|/|A|; empty A reports 0 with a flag."""
    if a.width != b.width:
        raise UsageError(f"shingle widths differ: {a.width} vs {b.width}")
    if not a.hashes:
        return ContainmentReport(a=a.owner, b=b.owner, containment=0.0, size_a=0,
                                 intersection=0, empty_a=True)
    inter = len(a.hashes & b.hashes)
    return ContainmentReport(
        a=a.owner,
        b=b.owner,
        containment=inter / len(a.hashes),
        size_a=len(a.hashes),
        intersection=inter,
    )


def containment_matrix(
    source_ids: list[str],
    load_set,
) -> list[ContainmentReport]:
    """Containment report for every ordered pair of sources, (A, A) excluded.

    ``load_set`` maps a source id to its ShingleSet; sets are loaded one
    pair at a time so at most two are resident. Pair order is row-major in
    the given id order, which keeps reruns byte-identical.
    """
    if len(set(source_ids)) != len(source_ids):
        raise UsageError("duplicate source ids")
    reports = []
    for a_id in source_ids:
        set_a = load_set(a_id)
        for b_id in source_ids:
            if a_id == b_id:
                continue
            set_b = load_set(b_id)
            reports.append(containment(set_a, set_b))
            del set_b
        del set_a
    return reports


def shingle_file_name(source_id: str) -> str:
    return f"{source_id}.u64"


def matrix_from_dir(shingle_dir: str | Path, width: int = DEFAULT_WIDTH) -> list[ContainmentReport]:
    """Containment matrix over every ``.u64`` shingle file in a directory."""
    shingle_dir = Path(shingle_dir)
    ids = sorted(p.stem for p in shingle_dir.glob("*.u64"))
    if not ids:
        raise UsageError(f"no shingle sets found in {shingle_dir}")

    def load_set(source_id: str) -> ShingleSet:
        path = shingle_dir / shingle_file_name(source_id)
        if not path.exists():
            raise UsageError(f"unknown source id: {source_id}")
        return ShingleSet.load(source_id, path, width)

    return containment_matrix(ids, load_set)


def report_warnings(reports: Iterable[ContainmentReport]) -> None:
    for rep in reports:
        if rep.empty_a:
            print(f"warning: source '{rep.a}' has an empty shingle set", file=sys.stderr)
