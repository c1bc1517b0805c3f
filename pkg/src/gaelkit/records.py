"""Shared record types, stable hashing, and line-delimited record I/O.

Every dataset this toolkit reads or writes is a UTF-8 file with one JSON
object per line (LF endings) and a fixed, canonical field order per record
type, so re-serialization is byte-stable and files diff cleanly.

``stable_key`` is the one content-addressing primitive used everywhere:
64-bit FNV-1a over length-prefixed UTF-8 parts. The algorithm is pinned
here deliberately; keys written into artifacts must be reproducible by any
future version of the toolkit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Iterable, Iterator, Type, TypeVar

LANGS = ("en", "ga", "bitext")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


class UsageError(ValueError):
    """Caller violated an operation's precondition."""


class RecordValidationError(ValueError):
    """A record (or line of a record file) failed schema validation."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if field is not None:
            prefix += f"field '{field}': "
        super().__init__(prefix + message)


def _fnv1a_bytes(data: bytes, state: int) -> int:
    for byte in data:
        state ^= byte
        state = (state * _FNV_PRIME) & _MASK64
    return state


def stable_key_int(parts: Iterable[str]) -> int:
    """64-bit FNV-1a over length-prefixed UTF-8 parts, as an integer.

    Each part contributes its byte length (8 bytes, big-endian) followed by
    its UTF-8 bytes, so ["a", "b"] and ["ab"] can never collide by
    concatenation ambiguity.
    """
    parts = list(parts)
    if not parts:
        raise UsageError("stable_key requires at least one part")
    state = _FNV_OFFSET
    for part in parts:
        data = part.encode("utf-8")
        state = _fnv1a_bytes(len(data).to_bytes(8, "big"), state)
        state = _fnv1a_bytes(data, state)
    return state


def stable_key(*parts: str) -> str:
    """Hex form of :func:`stable_key_int`, fixed width 16."""
    if len(parts) == 1 and not isinstance(parts[0], str):
        parts = tuple(parts[0])
    return f"{stable_key_int(parts):016x}"


def derive_seed(base_seed: int, label: str) -> int:
    """Deterministic child seed for a named stochastic stage."""
    return stable_key_int([str(base_seed), label])


def char_count(text: str) -> int:
    """Unicode scalar count (not bytes); what corpus size accounting uses."""
    return len(text)


# ---------------------------------------------------------------------------
# Record schemas


def _expect(obj: dict, field: str, kind: type, line: int | None, allow_empty: bool = True):
    if field not in obj:
        raise RecordValidationError("missing", field=field, line=line)
    value = obj[field]
    if kind is int and isinstance(value, bool):
        raise RecordValidationError("expected integer, got bool", field=field, line=line)
    if not isinstance(value, kind):
        raise RecordValidationError(
            f"expected {kind.__name__}, got {type(value).__name__}", field=field, line=line
        )
    if not allow_empty and isinstance(value, str) and not value:
        raise RecordValidationError("must be non-empty", field=field, line=line)
    return value


@dataclass(frozen=True)
class Document:
    """One unit of corpus text with its source, language tag, and size."""

    id: str
    source_id: str
    lang: str
    text: str
    char_count: int

    @classmethod
    def make(cls, source_id: str, lang: str, text: str) -> "Document":
        if lang not in LANGS:
            raise RecordValidationError(f"lang must be one of {LANGS}", field="lang")
        return cls(
            id=stable_key(source_id, text),
            source_id=source_id,
            lang=lang,
            text=text,
            char_count=char_count(text),
        )

    @classmethod
    def from_obj(cls, obj: dict, line: int | None = None) -> "Document":
        doc = cls(
            id=_expect(obj, "id", str, line, allow_empty=False),
            source_id=_expect(obj, "source_id", str, line, allow_empty=False),
            lang=_expect(obj, "lang", str, line),
            text=_expect(obj, "text", str, line),
            char_count=_expect(obj, "char_count", int, line),
        )
        if doc.lang not in LANGS:
            raise RecordValidationError(f"lang must be one of {LANGS}", field="lang", line=line)
        if doc.char_count != char_count(doc.text):
            raise RecordValidationError(
                "char_count does not match text scalar count", field="char_count", line=line
            )
        return doc


@dataclass(frozen=True)
class InstructionRecord:
    """One instruction-tuning row: instruction, optional context, response."""

    instruction: str
    context: str
    response: str
    category: str
    lang: str

    @classmethod
    def from_obj(cls, obj: dict, line: int | None = None) -> "InstructionRecord":
        rec = cls(
            instruction=_expect(obj, "instruction", str, line, allow_empty=False),
            context=_expect(obj, "context", str, line),
            response=_expect(obj, "response", str, line, allow_empty=False),
            category=_expect(obj, "category", str, line),
            lang=_expect(obj, "lang", str, line),
        )
        if rec.lang not in ("en", "ga"):
            raise RecordValidationError("lang must be 'en' or 'ga'", field="lang", line=line)
        return rec


@dataclass(frozen=True)
class ParallelInstructionRecord:
    """An English instruction row paired with its Irish translation."""

    en: InstructionRecord
    ga: InstructionRecord
    source_id: str

    def __post_init__(self):
        if self.en.lang != "en":
            raise RecordValidationError("en side must have lang 'en'", field="en.lang")
        if self.ga.lang != "ga":
            raise RecordValidationError("ga side must have lang 'ga'", field="ga.lang")
        if self.en.category != self.ga.category:
            raise RecordValidationError("category must match across sides", field="ga.category")

    @classmethod
    def from_obj(cls, obj: dict, line: int | None = None) -> "ParallelInstructionRecord":
        en_obj = _expect(obj, "en", dict, line)
        ga_obj = _expect(obj, "ga", dict, line)
        return cls(
            en=InstructionRecord.from_obj(en_obj, line),
            ga=InstructionRecord.from_obj(ga_obj, line),
            source_id=_expect(obj, "source_id", str, line, allow_empty=False),
        )


@dataclass(frozen=True)
class PreferencePair:
    """A prompt with an accepted and a rejected Irish response."""

    prompt_ga: str
    accepted_ga: str
    rejected_ga: str
    source_id: str

    def __post_init__(self):
        for name in ("prompt_ga", "accepted_ga", "rejected_ga"):
            if not getattr(self, name):
                raise RecordValidationError("must be non-empty", field=name)
        if self.accepted_ga == self.rejected_ga:
            raise RecordValidationError(
                "accepted_ga and rejected_ga must differ", field="rejected_ga"
            )

    @classmethod
    def from_obj(cls, obj: dict, line: int | None = None) -> "PreferencePair":
        try:
            return cls(
                prompt_ga=_expect(obj, "prompt_ga", str, line, allow_empty=False),
                accepted_ga=_expect(obj, "accepted_ga", str, line, allow_empty=False),
                rejected_ga=_expect(obj, "rejected_ga", str, line, allow_empty=False),
                source_id=_expect(obj, "source_id", str, line, allow_empty=False),
            )
        except RecordValidationError as err:
            if err.line is None and line is not None:
                raise RecordValidationError(str(err), line=line) from err
            raise


R = TypeVar("R")


def record_to_obj(record: Any) -> dict:
    """Dataclass -> plain dict in declared (canonical) field order."""
    out = {}
    for f in fields(record):
        value = getattr(record, f.name)
        if hasattr(value, "__dataclass_fields__"):
            value = record_to_obj(value)
        out[f.name] = value
    return out


def dumps_record(record: Any) -> str:
    return json.dumps(record_to_obj(record), ensure_ascii=False, separators=(",", ":"))


def write_records(path: str | Path, records: Iterable[Any]) -> int:
    """Write records one JSON object per line. Returns the count written."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(dumps_record(record) + "\n")
            count += 1
    return count


def read_records(path: str | Path, record_type: Type[R]) -> Iterator[R]:
    """Stream records of ``record_type`` from a line-delimited file.

    Raises :class:`RecordValidationError` naming the 1-based line number and
    offending field on the first malformed line. Memory use is bounded by a
    single line regardless of file size.
    """
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise RecordValidationError(f"not valid JSON ({err.msg})", line=line_no) from err
            if not isinstance(obj, dict):
                raise RecordValidationError("expected a JSON object", line=line_no)
            yield record_type.from_obj(obj, line=line_no)  # type: ignore[attr-defined]


# ---------------------------------------------------------------------------
# Source manifests


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    path: str
    lang: str
    char_count: int
    proportion: float


@dataclass(frozen=True)
class SourceManifest:
    """Corpus sources with computed character counts and proportions.

    Proportions are always derived from counts, never hand-entered; by
    default the denominator is the sum of the counts so they total 1.
    """

    entries: tuple[ManifestEntry, ...]

    @classmethod
    def build(
        cls,
        sources: Iterable[tuple[str, str, str, int]],
        total_chars: int | None = None,
    ) -> "SourceManifest":
        """Build from (name, path, lang, char_count) rows.

        ``total_chars`` overrides the proportion denominator; useful when
        reporting shares of a corpus size declared elsewhere. Left unset,
        proportions sum to 1 exactly up to float rounding.
        """
        rows = list(sources)
        if not rows:
            raise UsageError("manifest needs at least one source")
        denom = total_chars if total_chars is not None else sum(r[3] for r in rows)
        if denom <= 0:
            raise UsageError("total character count must be positive")
        entries = tuple(
            ManifestEntry(name=n, path=p, lang=l, char_count=c, proportion=c / denom)
            for (n, p, l, c) in rows
        )
        return cls(entries=entries)

    def proportions(self) -> dict[str, float]:
        return {e.name: e.proportion for e in self.entries}

    def total_chars(self) -> int:
        return sum(e.char_count for e in self.entries)

    def to_obj(self) -> dict:
        return {"entries": [record_to_obj(e) for e in self.entries]}

    @classmethod
    def from_obj(cls, obj: dict) -> "SourceManifest":
        entries = []
        for i, item in enumerate(obj.get("entries", [])):
            entries.append(
                ManifestEntry(
                    name=_expect(item, "name", str, i, allow_empty=False),
                    path=_expect(item, "path", str, i),
                    lang=_expect(item, "lang", str, i),
                    char_count=_expect(item, "char_count", int, i),
                    proportion=float(item.get("proportion", 0.0)),
                )
            )
        return cls(entries=tuple(entries))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_obj(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "SourceManifest":
        return cls.from_obj(json.loads(Path(path).read_text(encoding="utf-8")))
