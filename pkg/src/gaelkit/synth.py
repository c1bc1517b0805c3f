"""Dataset synthesis jobs: instruction-pair generation, dataset
translation, and preference-pair construction.

Jobs never lose data silently: every input ends up in the output stream,
the retry file, or the drop log, and each job's report asserts that
conservation. Structured outputs are requested as fenced JSON and parsed
strictly; an unusable reply earns exactly one repair re-request before the
input is routed to retries/drops.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from string import Template
from typing import Callable, Iterable, Sequence

import json

from .providers import CompletionClient, GenRequest, RequestFailed, extract_fenced_json
from .records import (
    InstructionRecord,
    ParallelInstructionRecord,
    PreferencePair,
    RecordValidationError,
    UsageError,
    _expect,
    stable_key,
)

PROMPTS_DIR = Path(__file__).parent / "prompts"


def render_prompt(name: str, **subs: str) -> tuple[str, str]:
    """Template file -> (system, user); the '---' line splits the halves."""
    raw = (PROMPTS_DIR / f"{name}.txt").read_text(encoding="utf-8")
    system, _, user = raw.partition("\n---\n")
    return system.strip(), Template(user).substitute(**subs).strip()


def repair_suffix() -> str:
    return "\n\n" + (PROMPTS_DIR / "repair.txt").read_text(encoding="utf-8").strip()


# ---------------------------------------------------------------------------
# Record types owned by this module


@dataclass(frozen=True)
class SeedText:
    id: str
    text: str

    @classmethod
    def from_obj(cls, obj: dict, line: int | None = None) -> "SeedText":
        return cls(
            id=_expect(obj, "id", str, line, allow_empty=False),
            text=_expect(obj, "text", str, line, allow_empty=False),
        )


@dataclass(frozen=True)
class QAPair:
    seed_ref: str
    model: str
    question_ga: str
    answer_ga: str

    @classmethod
    def from_obj(cls, obj: dict, line: int | None = None) -> "QAPair":
        return cls(
            seed_ref=_expect(obj, "seed_ref", str, line, allow_empty=False),
            model=_expect(obj, "model", str, line, allow_empty=False),
            question_ga=_expect(obj, "question_ga", str, line, allow_empty=False),
            answer_ga=_expect(obj, "answer_ga", str, line, allow_empty=False),
        )


@dataclass(frozen=True)
class PromptResponse:
    prompt: str
    response: str

    @classmethod
    def from_obj(cls, obj: dict, line: int | None = None) -> "PromptResponse":
        return cls(
            prompt=_expect(obj, "prompt", str, line, allow_empty=False),
            response=_expect(obj, "response", str, line, allow_empty=False),
        )


@dataclass
class DropEntry:
    item: str
    model: str
    reason: str


@dataclass
class JobReport:
    job: str
    input_count: int
    output_count: int = 0
    retry_count: int = 0
    drop_count: int = 0
    cache_hits: int = 0
    drops: list[DropEntry] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def conserved(self) -> bool:
        return self.input_count == self.output_count + self.retry_count + self.drop_count

    def to_obj(self) -> dict:
        return {
            "job": self.job,
            "input_count": self.input_count,
            "output_count": self.output_count,
            "retry_count": self.retry_count,
            "drop_count": self.drop_count,
            "cache_hits": self.cache_hits,
            "drops": [vars(d) for d in self.drops],
            "warnings": self.warnings,
        }


def _map_ordered(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _complete_parsed(
    client: CompletionClient,
    req: GenRequest,
    required: Sequence[str],
    validate: Callable[[dict], str | None] | None = None,
):
    """One completion with strict parsing and a single repair retry.

    Returns (obj, cached_flag) or raises RequestFailed with the reason.
    """
    attempts = [req]
    repaired = GenRequest(
        provider=req.provider,
        model=req.model,
        system=req.system,
        user=req.user + repair_suffix(),
        temperature=req.temperature,
        max_tokens=req.max_tokens,
        key_ref=req.key_ref,
    )
    attempts.append(repaired)
    reason = "unparseable output"
    for attempt in attempts:
        completion = client.complete(attempt)
        obj = extract_fenced_json(completion.text)
        if obj is None:
            reason = "no parseable fenced object"
            continue
        missing = [
            key for key in required if not isinstance(obj.get(key), str) or not obj[key]
        ]
        if missing:
            reason = f"missing or empty fields: {', '.join(missing)}"
            continue
        if validate is not None:
            problem = validate(obj)
            if problem:
                reason = problem
                continue
        return obj, completion.cached
    raise RequestFailed(reason)


# ---------------------------------------------------------------------------
# Jobs


def gen_instruction_pairs(
    pools: dict[str, list[SeedText]],
    models: Sequence[str],
    n: int,
    client: CompletionClient,
    provider: str = "mock",
    temperature: float = 0.7,
    workers: int = 1,
) -> tuple[list[QAPair], JobReport]:
    """Generate n QA pairs per model, half seeded from each pool.

    Seeds are assigned without replacement in pool order; when a pool is
    smaller than n/2 the seeds repeat round-robin with a warning.
    """
    if n % 2:
        raise UsageError("n must be even: half the samples come from each pool")
    if len(pools) != 2:
        raise UsageError("exactly two seed pools are required")
    for name, pool in pools.items():
        if not pool:
            raise UsageError(f"seed pool '{name}' is empty")
    if not models:
        raise UsageError("at least one model is required")

    report = JobReport(job="gen-instruction-pairs", input_count=n * len(models))
    half = n // 2
    tasks = []
    for model in models:
        for pool_name in sorted(pools):
            pool = pools[pool_name]
            if half > len(pool):
                report.warnings.append(
                    f"pool '{pool_name}' has {len(pool)} seeds for {half} requests; "
                    "seeds repeat round-robin"
                )
            for i in range(half):
                tasks.append((model, pool[i % len(pool)]))

    def run(task):
        model, seed = task
        system, user = render_prompt("gen_pair", seed_text=seed.text)
        req = GenRequest(
            provider=provider, model=model, system=system, user=user, temperature=temperature
        )
        try:
            obj, cached = _complete_parsed(client, req, ("question_ga", "answer_ga"))
        except RequestFailed as err:
            return DropEntry(item=seed.id, model=model, reason=str(err))
        pair = QAPair(
            seed_ref=seed.id,
            model=model,
            question_ga=obj["question_ga"],
            answer_ga=obj["answer_ga"],
        )
        return (pair, cached)

    pairs: list[QAPair] = []
    for outcome in _map_ordered(run, tasks, workers):
        if isinstance(outcome, DropEntry):
            report.drops.append(outcome)
            report.drop_count += 1
        else:
            pair, cached = outcome
            pairs.append(pair)
            report.output_count += 1
            report.cache_hits += int(cached)
    return pairs, report


def translate_instruction_dataset(
    records: Iterable[InstructionRecord],
    model: str,
    client: CompletionClient,
    provider: str = "mock",
    temperature: float = 0.0,
    workers: int = 1,
) -> tuple[list[ParallelInstructionRecord], list[InstructionRecord], JobReport]:
    """Field-wise translation of an instruction dataset into parallel form.

    Failures are routed to the returned retry list, never dropped; an empty
    input context is preserved as empty regardless of what the model says.
    """
    rows = list(records)
    report = JobReport(job="translate-instruction-dataset", input_count=len(rows))

    def run(rec: InstructionRecord):
        payload = {
            "instruction": rec.instruction,
            "context": rec.context,
            "response": rec.response,
        }
        system, user = render_prompt(
            "translate", record_json="```json\n" + json.dumps(payload, ensure_ascii=False) + "\n```"
        )
        req = GenRequest(
            provider=provider, model=model, system=system, user=user, temperature=temperature
        )
        required = ("instruction", "response") if not rec.context else (
            "instruction", "context", "response"
        )
        try:
            obj, cached = _complete_parsed(client, req, required)
        except RequestFailed as err:
            return (rec, str(err))
        ga = InstructionRecord(
            instruction=obj["instruction"],
            context="" if not rec.context else obj["context"],
            response=obj["response"],
            category=rec.category,
            lang="ga",
        )
        parallel = ParallelInstructionRecord(
            en=rec,
            ga=ga,
            source_id=stable_key(rec.instruction, rec.context, rec.response),
        )
        return (parallel, cached)

    out: list[ParallelInstructionRecord] = []
    retries: list[InstructionRecord] = []
    for outcome in _map_ordered(run, rows, workers):
        first, second = outcome
        if isinstance(first, ParallelInstructionRecord):
            out.append(first)
            report.output_count += 1
            report.cache_hits += int(second)
        else:
            retries.append(first)
            report.retry_count += 1
            report.warnings.append(f"retry: {second}")
    return out, retries, report


def gen_preference_pairs(
    records: Iterable[PromptResponse],
    model: str,
    client: CompletionClient,
    provider: str = "mock",
    temperature: float = 0.0,
    workers: int = 1,
) -> tuple[list[PreferencePair], list[PromptResponse], JobReport]:
    """Build (prompt, accepted, rejected) triples in the target language.

    The accepted side is requested as the natural, fluent rendering and the
    rejected side as the degraded one; a reply where the two coincide gets
    one repair re-request and is then routed to retries.
    """
    rows = list(records)
    report = JobReport(job="gen-preference-pairs", input_count=len(rows))

    def validate(obj: dict) -> str | None:
        if obj["accepted_ga"] == obj["rejected_ga"]:
            return "accepted_ga equals rejected_ga"
        return None

    def run(rec: PromptResponse):
        payload = {"prompt": rec.prompt, "response": rec.response}
        system, user = render_prompt(
            "preference",
            record_json="```json\n" + json.dumps(payload, ensure_ascii=False) + "\n```",
        )
        req = GenRequest(
            provider=provider, model=model, system=system, user=user, temperature=temperature
        )
        try:
            obj, cached = _complete_parsed(
                client, req, ("prompt_ga", "accepted_ga", "rejected_ga"), validate
            )
        except RequestFailed as err:
            return (rec, str(err))
        try:
            pair = PreferencePair(
                prompt_ga=obj["prompt_ga"],
                accepted_ga=obj["accepted_ga"],
                rejected_ga=obj["rejected_ga"],
                source_id=stable_key(rec.prompt, rec.response),
            )
        except RecordValidationError as err:
            return (rec, str(err))
        return (pair, cached)

    out: list[PreferencePair] = []
    retries: list[PromptResponse] = []
    for outcome in _map_ordered(run, rows, workers):
        first, second = outcome
        if isinstance(first, PreferencePair):
            out.append(first)
            report.output_count += 1
            report.cache_hits += int(second)
        else:
            retries.append(first)
            report.retry_count += 1
            report.warnings.append(f"retry: {second}")
    return out, retries, report
