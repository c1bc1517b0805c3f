"""Pairwise comparison construction for annotation.

Builds the full comparison set for a model arena (every unordered model
pair, a fixed number of comparisons each, seeds balanced across the two
seed pools) and for preference validation (accepted vs rejected responses
as anonymous A/B). Model identities live only in hidden fields; display
order is a seeded coin stored as a swap flag so that re-randomizing the
display never changes a comparison's key, which is what annotation
progress is tracked by.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping, Sequence

from .records import PreferencePair, UsageError, _expect, derive_seed, stable_key
from .synth import QAPair, SeedText

MODE_GENERATION = "generation-arena"
MODE_PREFERENCE = "preference-validation"

PREF_ACCEPTED = "pref-accepted"
PREF_REJECTED = "pref-rejected"

QUESTIONS = {
    MODE_GENERATION: (
        "Which Question–Answer pair exhibits a stronger command of Irish grammar "
        "and semantic coherence? Take the use of the reference text into account. "
        "If unsure, pick the one with a stronger display of Irish grammar. "
        "Choose A or B."
    ),
    MODE_PREFERENCE: (
        "Which response answers the prompt in better Irish: more natural, more "
        "accurate, and more helpful? Choose A or B."
    ),
}


@dataclass(frozen=True)
class Comparison:
    key: str
    mode: str
    seed_ref: str
    model_a: str  # canonical order: model_a < model_b; hidden from annotators
    model_b: str
    display_swap: bool
    seed_text: str
    payload_a: dict
    payload_b: dict
    intended: str | None = None  # preference-validation: canonical intended winner

    def __post_init__(self):
        if self.model_a >= self.model_b:
            raise UsageError("model_a must sort before model_b")

    def displayed(self) -> tuple[dict, dict]:
        if self.display_swap:
            return self.payload_b, self.payload_a
        return self.payload_a, self.payload_b

    def resolve_choice(self, choice: str) -> str:
        """Map a displayed A/B choice back to the canonical model name."""
        if choice not in ("A", "B"):
            raise UsageError("choice must be 'A' or 'B'")
        picked_first = choice == "A"
        if self.display_swap:
            return self.model_b if picked_first else self.model_a
        return self.model_a if picked_first else self.model_b

    def visible_payload(self) -> dict:
        """What an annotator may see; never includes model names or intent."""
        shown_a, shown_b = self.displayed()
        return {
            "key": self.key,
            "mode": self.mode,
            "question": QUESTIONS[self.mode],
            "seed_text": self.seed_text,
            "a": shown_a,
            "b": shown_b,
        }

    @classmethod
    def from_obj(cls, obj: dict, line: int | None = None) -> "Comparison":
        return cls(
            key=_expect(obj, "key", str, line, allow_empty=False),
            mode=_expect(obj, "mode", str, line, allow_empty=False),
            seed_ref=_expect(obj, "seed_ref", str, line, allow_empty=False),
            model_a=_expect(obj, "model_a", str, line, allow_empty=False),
            model_b=_expect(obj, "model_b", str, line, allow_empty=False),
            display_swap=bool(obj.get("display_swap", False)),
            seed_text=_expect(obj, "seed_text", str, line),
            payload_a=_expect(obj, "payload_a", dict, line),
            payload_b=_expect(obj, "payload_b", dict, line),
            intended=obj.get("intended"),
        )


def _swap_coin(seed: int, key: str) -> bool:
    return random.Random(derive_seed(seed, f"swap:{key}")).random() < 0.5


def schedule_pairs(
    models: Sequence[str],
    per_pair: int,
    pools: Mapping[str, list[SeedText]],
    generations: Mapping[tuple[str, str], QAPair],
    seed: int = 0,
) -> tuple[list[Comparison], list[str]]:
    """Comparisons for every unordered model pair, per_pair each.

    Seeds are drawn without replacement per (pair, pool), balanced across
    the two pools; undersized pools repeat round-robin (warned, with an
    occurrence marker folded into the seed ref so keys stay unique).
    Requires a cached generation for every (model, seed) used; missing ones
    are reported together as a hard error.
    """
    canonical = sorted(set(models))
    if len(canonical) < 2:
        raise UsageError("need at least two models")
    if len(canonical) != len(models):
        raise UsageError("duplicate model names")
    if per_pair < 1:
        raise UsageError("per_pair must be >= 1")
    if len(pools) != 2 or any(not p for p in pools.values()):
        raise UsageError("exactly two non-empty seed pools are required")

    warnings: list[str] = []
    comparisons: list[Comparison] = []
    gaps: list[str] = []
    pool_names = sorted(pools)
    for model_a, model_b in combinations(canonical, 2):
        chosen: list[tuple[SeedText, int]] = []
        for pool_idx, pool_name in enumerate(pool_names):
            k = per_pair // 2 + (per_pair % 2 if pool_idx == 0 else 0)
            pool = pools[pool_name]
            rng = random.Random(derive_seed(seed, f"seeds:{model_a}|{model_b}:{pool_name}"))
            if k <= len(pool):
                chosen.extend((pool[i], 0) for i in rng.sample(range(len(pool)), k))
            else:
                warnings.append(
                    f"pool '{pool_name}' has {len(pool)} seeds for {k} comparisons "
                    f"of pair ({model_a}, {model_b}); seeds repeat round-robin"
                )
                order = list(range(len(pool)))
                rng.shuffle(order)
                chosen.extend(
                    (pool[order[i % len(pool)]], i // len(pool)) for i in range(k)
                )
        for seed_text, occurrence in chosen:
            ref = seed_text.id if occurrence == 0 else f"{seed_text.id}#{occurrence}"
            key = stable_key(MODE_GENERATION, model_a, model_b, ref)
            payloads = []
            for model in (model_a, model_b):
                gen = generations.get((model, seed_text.id))
                if gen is None:
                    gaps.append(f"({model}, {seed_text.id})")
                    continue
                payloads.append(
                    {"question_ga": gen.question_ga, "answer_ga": gen.answer_ga}
                )
            if len(payloads) != 2:
                continue
            comparisons.append(
                Comparison(
                    key=key,
                    mode=MODE_GENERATION,
                    seed_ref=ref,
                    model_a=model_a,
                    model_b=model_b,
                    display_swap=_swap_coin(seed, key),
                    seed_text=seed_text.text,
                    payload_a=payloads[0],
                    payload_b=payloads[1],
                )
            )
    if gaps:
        raise UsageError(
            "missing cached generations for (model, seed): " + ", ".join(sorted(set(gaps)))
        )
    return comparisons, warnings


def build_preference_validation(
    pairs: Iterable[PreferencePair], sample_n: int, seed: int = 0
) -> list[Comparison]:
    """Sample preference pairs into anonymous A/B validation comparisons.

    The intended winner is stored on the hidden side of the record only;
    the annotator-visible payload carries just the prompt and two response
    texts in seeded display order.
    """
    pool = list(pairs)
    if sample_n > len(pool):
        raise UsageError(f"sample_n={sample_n} exceeds available pairs ({len(pool)})")
    rng = random.Random(derive_seed(seed, "pref-sample"))
    indices = sorted(rng.sample(range(len(pool)), sample_n))
    comparisons = []
    for idx in indices:
        pair = pool[idx]
        key = stable_key(MODE_PREFERENCE, PREF_ACCEPTED, PREF_REJECTED, pair.source_id)
        comparisons.append(
            Comparison(
                key=key,
                mode=MODE_PREFERENCE,
                seed_ref=pair.source_id,
                model_a=PREF_ACCEPTED,
                model_b=PREF_REJECTED,
                display_swap=_swap_coin(seed, key),
                seed_text=pair.prompt_ga,
                payload_a={"response_ga": pair.accepted_ga},
                payload_b={"response_ga": pair.rejected_ga},
                intended=PREF_ACCEPTED,
            )
        )
    return comparisons


def scan_anonymity(comparisons: Iterable[Comparison]) -> list[str]:
    """Return violations where a model name leaks into visible payloads."""
    import json

    violations = []
    for comp in comparisons:
        visible = json.dumps(comp.visible_payload(), ensure_ascii=False).lower()
        for name in (comp.model_a, comp.model_b):
            if name.lower() in visible:
                violations.append(f"{comp.key}: '{name}' appears in visible payload")
    return violations
