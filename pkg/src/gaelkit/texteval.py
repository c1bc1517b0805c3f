"""Score prediction files against references.

Corpus BLEU (single reference, pooled counts), normalized exact-match
accuracy for closed questions, and response-length statistics that feed
the Mann-Whitney comparison of generation lengths.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .records import UsageError

BLEU_EPSILON = 1e-9  # floor for zero n-gram precision before the log


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch)[0] in ("P", "S")


def bleu_tokenize(text: str) -> list[str]:
    """Lower-case, detach punctuation into standalone tokens, split."""
    out: list[str] = []
    for ch in text.lower():
        if _is_punct(ch):
            out.append(f" {ch} ")
        else:
            out.append(ch)
    return "".join(out).split()


@dataclass
class BleuResult:
    score: float
    precisions: list[float]
    brevity_penalty: float
    hyp_tokens: int
    ref_tokens: int


def bleu(hypotheses: Sequence[str], references: Sequence[str], max_n: int = 4) -> BleuResult:
    """Corpus-level BLEU with pooled clipped n-gram counts.

    Orders with zero matches (but a nonzero denominator) are floored at
    BLEU_EPSILON before the log so one missing order degrades rather than
    zeroes the score; orders where the corpus has no hypothesis n-grams at
    all are excluded from the geometric mean (effective order), which keeps
    the identity score at 1.0 for short corpora. Empty hypotheses
    contribute no matches and never abort.
    """
    if len(hypotheses) != len(references):
        raise UsageError("hypotheses and references must have equal lengths")
    if max_n < 1:
        raise UsageError("max_n must be >= 1")

    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_tokens = bleu_tokenize(hyp)
        ref_tokens = bleu_tokenize(ref)
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        for n in range(1, max_n + 1):
            hyp_grams = Counter(
                tuple(hyp_tokens[i : i + n]) for i in range(len(hyp_tokens) - n + 1)
            )
            ref_grams = Counter(
                tuple(ref_tokens[i : i + n]) for i in range(len(ref_tokens) - n + 1)
            )
            totals[n - 1] += sum(hyp_grams.values())
            matches[n - 1] += sum(
                min(count, ref_grams[gram]) for gram, count in hyp_grams.items()
            )

    precisions = []
    effective_logs = []
    for n in range(max_n):
        if totals[n] == 0:
            precisions.append(0.0)  # excluded from the mean: no n-grams of this order
            continue
        p = matches[n] / totals[n] if matches[n] > 0 else BLEU_EPSILON
        precisions.append(p)
        effective_logs.append(math.log(p))

    if hyp_len == 0:
        brevity_penalty = 0.0
    elif hyp_len >= ref_len:
        brevity_penalty = 1.0
    else:
        brevity_penalty = math.exp(1.0 - ref_len / hyp_len)

    if effective_logs:
        score = brevity_penalty * math.exp(sum(effective_logs) / len(effective_logs))
    else:
        score = 0.0
    return BleuResult(
        score=score,
        precisions=precisions,
        brevity_penalty=brevity_penalty,
        hyp_tokens=hyp_len,
        ref_tokens=ref_len,
    )


def normalize_answer(text: str) -> str:
    """Lower-case, strip punctuation, collapse whitespace."""
    lowered = text.lower()
    stripped = "".join(ch for ch in lowered if not _is_punct(ch))
    return " ".join(stripped.split())


def exact_match(predictions: Sequence[str], golds: Sequence[str]) -> float:
    """Fraction of pairs equal after answer normalization."""
    if len(predictions) != len(golds):
        raise UsageError("predictions and golds must have equal lengths")
    if not predictions:
        return 0.0
    hits = sum(
        1 for p, g in zip(predictions, golds) if normalize_answer(p) == normalize_answer(g)
    )
    return hits / len(predictions)


@dataclass
class LengthStats:
    counts: list[int]
    count: int
    mean: float | None
    bin_width: int
    histogram: dict[int, int]  # bin lower edge -> frequency


def length_stats(responses: Sequence[str], bin_width: int = 10) -> LengthStats:
    """Whitespace word counts with a fixed-width histogram for plotting."""
    if bin_width < 1:
        raise UsageError("bin_width must be >= 1")
    counts = [len(r.split()) for r in responses]
    histogram: dict[int, int] = {}
    for c in counts:
        edge = (c // bin_width) * bin_width
        histogram[edge] = histogram.get(edge, 0) + 1
    mean = sum(counts) / len(counts) if counts else None
    return LengthStats(
        counts=counts,
        count=len(counts),
        mean=mean,
        bin_width=bin_width,
        histogram=dict(sorted(histogram.items())),
    )
