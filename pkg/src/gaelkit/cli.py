"""Command-line entry point.

Subcommands mirror the pipeline stages: ingest, dedup, mix, synth, arena,
serve, stats, eval. Every command that produces files also writes a
run-record (config snapshot, input hashes, toolkit version, no
timestamps), so two runs that claim the same provenance can be compared
byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .records import (
    Document,
    InstructionRecord,
    RecordValidationError,
    SourceManifest,
    UsageError,
    read_records,
    write_records,
)

log = logging.getLogger("gaelkit")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_run_record(out_dir: Path, subcommand: str, config: dict, inputs: list[Path],
                     name: str = "run-record.json") -> Path:
    record = {
        "subcommand": subcommand,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in sorted(inputs) if p.exists()},
        "version": __version__,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_manifest_config(path: Path) -> list[tuple[str, Path, str]]:
    """(name, path, lang) rows from a manifest config or computed manifest."""
    obj = json.loads(path.read_text(encoding="utf-8"))
    rows = obj.get("sources") or obj.get("entries")
    if not rows:
        raise UsageError(f"{path} lists no sources")
    out = []
    for row in rows:
        source_path = Path(row["path"])
        if not source_path.is_absolute():
            source_path = path.parent / source_path
        out.append((row["name"], source_path, row["lang"]))
    return out


def iter_source_documents(name: str, source_path: Path, lang: str):
    """One document per non-empty line; bitext lines are en<TAB>ga pairs."""
    with open(source_path, "r", encoding="utf-8") as handle:
        for line in handle:
            text = line.rstrip("\n")
            if not text.strip():
                continue
            yield Document.make(source_id=name, lang=lang, text=text)


# ---------------------------------------------------------------------------
# Subcommand implementations


def cmd_ingest(args) -> int:
    manifest_path = Path(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = load_manifest_config(manifest_path)

    doc_count = 0
    manifest_rows = []
    with open(out_dir / "documents.jsonl", "w", encoding="utf-8", newline="\n") as sink:
        from .records import dumps_record

        for name, source_path, lang in rows:
            chars = 0
            for doc in iter_source_documents(name, source_path, lang):
                sink.write(dumps_record(doc) + "\n")
                chars += doc.char_count
                doc_count += 1
            manifest_rows.append((name, str(source_path), lang, chars))
    manifest = SourceManifest.build(manifest_rows)
    manifest.save(out_dir / "manifest.json")
    write_run_record(out_dir, "ingest", {"manifest": str(manifest_path)},
                     [manifest_path] + [p for _, p, _ in rows])
    print(json.dumps({"documents": doc_count, "sources": len(manifest_rows),
                      "total_chars": manifest.total_chars()}))
    return 0


def cmd_dedup_shingle(args) -> int:
    from .dedup import ShingleSet, shingle_file_name

    manifest_path = Path(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = load_manifest_config(manifest_path)
    sizes = {}
    for name, source_path, lang in rows:
        texts = (doc.text for doc in iter_source_documents(name, source_path, lang))
        shingles = ShingleSet.from_texts(name, texts, width=args.width)
        shingles.save(out_dir / shingle_file_name(name))
        sizes[name] = len(shingles.hashes)
    write_run_record(out_dir, "dedup-shingle",
                     {"manifest": str(manifest_path), "width": args.width},
                     [manifest_path] + [p for _, p, _ in rows])
    print(json.dumps({"sources": sizes, "width": args.width}))
    return 0


def cmd_dedup_matrix(args) -> int:
    from .dedup import matrix_from_dir, report_warnings

    reports = matrix_from_dir(args.in_dir, width=args.width)
    report_warnings(reports)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8", newline="\n") as sink:
        for rep in reports:
            sink.write(json.dumps({
                "a": rep.a, "b": rep.b, "containment": rep.containment,
                "size_a": rep.size_a, "intersection": rep.intersection,
                "empty_a": rep.empty_a,
            }, ensure_ascii=False) + "\n")
    write_run_record(out_path.parent, "dedup-matrix",
                     {"in": args.in_dir, "width": args.width},
                     list(Path(args.in_dir).glob("*.u64")),
                     name=f"{out_path.stem}.run-record.json")
    print(json.dumps({"pairs": len(reports)}))
    return 0


def cmd_mix(args) -> int:
    from .mixer import MixPlan, mix_and_shuffle, pack, segment, split, write_blocks
    from .tokenizers import build_tokenizer

    manifest_path = Path(args.manifest)
    plan = MixPlan.from_file(Path(args.plan)) if args.plan else MixPlan(seed=args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = load_manifest_config(manifest_path)
    documents = []
    manifest_rows = []
    for name, source_path, lang in rows:
        chars = 0
        for doc in iter_source_documents(name, source_path, lang):
            documents.append(doc)
            chars += doc.char_count
        manifest_rows.append((name, str(source_path), lang, chars))
    manifest = SourceManifest.build(manifest_rows)

    segmented, rejected = segment(documents, plan.separator)
    for rej in rejected:
        log.warning("rejected document %s: %s", rej.doc_id, rej.reason)
    stream = mix_and_shuffle(segmented, plan)
    tokenizer = build_tokenizer(args.tokenizer, separator=plan.separator,
                                vocab_path=args.vocab)
    blocks, pack_stats = pack(stream, tokenizer, plan)
    assigned, split_stats = split(blocks, plan)
    if split_stats.warning:
        log.warning("%s", split_stats.warning)
    write_blocks(out_dir, assigned)

    stats_obj = {
        "plan": {
            "seed": plan.seed,
            "block_size": plan.block_size,
            "split_ratio": list(plan.split_ratio),
            "separator": plan.separator,
            "bitext_first": plan.bitext_first,
        },
        "pack": {
            "total_tokens": pack_stats.total_tokens,
            "emitted_blocks": pack_stats.emitted_blocks,
            "emitted_tokens": pack_stats.emitted_tokens,
            "dropped_tokens": pack_stats.dropped_tokens,
            "docs_packed": pack_stats.docs_packed,
            "docs_skipped": pack_stats.docs_skipped,
            "separators_emitted": pack_stats.separators_emitted,
        },
        "split": {"counts": split_stats.counts, "fractions": split_stats.fractions},
        "rejected_documents": [{"id": r.doc_id, "reason": r.reason} for r in rejected],
        "source_proportions": manifest.proportions(),
    }
    (out_dir / "stats.json").write_text(
        json.dumps(stats_obj, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    config = {
        "manifest": str(manifest_path),
        "plan": stats_obj["plan"],
        "tokenizer": args.tokenizer,
    }
    write_run_record(out_dir, "mix", config, [manifest_path] + [p for _, p, _ in rows])
    print(json.dumps(stats_obj["pack"]))
    return 0


def _build_client(args):
    from .providers import CompletionClient, CostLedger, TokenBucket, build_provider

    prices = {}
    if getattr(args, "prices", None):
        raw = json.loads(Path(args.prices).read_text(encoding="utf-8"))
        prices = {model: (float(v[0]), float(v[1])) for model, v in raw.items()}
    limiter = TokenBucket(args.rate) if getattr(args, "rate", None) else None
    provider = build_provider(args.provider, base_url=getattr(args, "base_url", None))
    return CompletionClient(
        provider,
        cache_dir=args.cache,
        rate_limiter=limiter,
        ledger=CostLedger(prices=prices),
    )


def _write_job_outputs(out_path: Path, records, report, ledger) -> None:
    write_records(out_path, records)
    report_obj = report.to_obj()
    report_obj["cost_total"] = ledger.total()
    report_obj["cost_entries"] = len(ledger.entries)
    report_path = out_path.with_suffix(out_path.suffix + ".report.json")
    report_path.write_text(json.dumps(report_obj, indent=2) + "\n", encoding="utf-8")


def cmd_synth_gen(args) -> int:
    from .synth import SeedText, gen_instruction_pairs

    pools = {}
    pool_paths = [Path(p) for p in args.pools.split(",")]
    for path in pool_paths:
        pools[path.stem] = list(read_records(path, SeedText))
    client = _build_client(args)
    pairs, report = gen_instruction_pairs(
        pools, args.models.split(","), args.n, client,
        provider=args.provider, temperature=args.temperature, workers=args.workers,
    )
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    _write_job_outputs(out_path, pairs, report, client.ledger)
    write_run_record(out_path.parent, "synth-gen",
                     {"models": args.models, "n": args.n, "provider": args.provider,
                      "temperature": args.temperature},
                     pool_paths, name=f"{out_path.stem}.run-record.json")
    print(json.dumps(report.to_obj()))
    return 0 if report.conserved() else 1


def cmd_synth_translate(args) -> int:
    from .synth import translate_instruction_dataset

    records = list(read_records(Path(args.in_path), InstructionRecord))
    client = _build_client(args)
    out, retries, report = translate_instruction_dataset(
        records, args.model, client, provider=args.provider,
        temperature=args.temperature, workers=args.workers,
    )
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    _write_job_outputs(out_path, out, report, client.ledger)
    retry_path = Path(args.retry_out) if args.retry_out else out_path.with_suffix(".retry.jsonl")
    write_records(retry_path, retries)
    write_run_record(out_path.parent, "synth-translate",
                     {"model": args.model, "provider": args.provider},
                     [Path(args.in_path)], name=f"{out_path.stem}.run-record.json")
    print(json.dumps(report.to_obj()))
    return 0 if report.conserved() else 1


def cmd_synth_pref(args) -> int:
    from .synth import PromptResponse, gen_preference_pairs

    records = list(read_records(Path(args.in_path), PromptResponse))
    client = _build_client(args)
    out, retries, report = gen_preference_pairs(
        records, args.model, client, provider=args.provider,
        temperature=args.temperature, workers=args.workers,
    )
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    _write_job_outputs(out_path, out, report, client.ledger)
    retry_path = Path(args.retry_out) if args.retry_out else out_path.with_suffix(".retry.jsonl")
    write_records(retry_path, retries)
    write_run_record(out_path.parent, "synth-pref",
                     {"model": args.model, "provider": args.provider},
                     [Path(args.in_path)], name=f"{out_path.stem}.run-record.json")
    print(json.dumps(report.to_obj()))
    return 0 if report.conserved() else 1


def cmd_arena_build(args) -> int:
    from .arena import scan_anonymity, schedule_pairs
    from .synth import QAPair, SeedText

    pools = {}
    pool_paths = [Path(p) for p in args.seeds.split(",")]
    for path in pool_paths:
        pools[path.stem] = list(read_records(path, SeedText))
    generations = {}
    for pair in read_records(Path(args.gens), QAPair):
        generations.setdefault((pair.model, pair.seed_ref), pair)
    comparisons, warnings = schedule_pairs(
        args.models.split(","), args.per_pair, pools, generations, seed=args.seed
    )
    for warning in warnings:
        log.warning("%s", warning)
    violations = scan_anonymity(comparisons)
    if violations:
        for v in violations:
            log.error("anonymity violation: %s", v)
        return 1
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_records(out_path, comparisons)
    write_run_record(out_path.parent, "arena-build",
                     {"models": args.models, "per_pair": args.per_pair, "seed": args.seed},
                     pool_paths + [Path(args.gens)],
                     name=f"{out_path.stem}.run-record.json")
    n_models = len(args.models.split(","))
    n_pairs = n_models * (n_models - 1) // 2
    print(json.dumps({
        "comparisons": len(comparisons),
        "model_pairs": n_pairs,
        "per_pair": args.per_pair,
        "annotations_if_three_judges": 3 * len(comparisons),
    }))
    return 0


def cmd_arena_pref(args) -> int:
    from .arena import build_preference_validation
    from .records import PreferencePair

    pairs = list(read_records(Path(args.pairs), PreferencePair))
    comparisons = build_preference_validation(pairs, args.sample_n, seed=args.seed)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_records(out_path, comparisons)
    write_run_record(out_path.parent, "arena-pref",
                     {"sample_n": args.sample_n, "seed": args.seed},
                     [Path(args.pairs)], name=f"{out_path.stem}.run-record.json")
    print(json.dumps({"comparisons": len(comparisons)}))
    return 0


def cmd_serve(args) -> int:
    from .annostore import serve

    serve(args.comparisons, args.ledger, port=args.port, seed=args.seed,
          ui_dir=args.ui, host=args.host)
    return 0


def cmd_stats_bt(args) -> int:
    from .stats import WinMatrix, bt_fit

    matrix = WinMatrix.load(Path(args.in_path))
    result = bt_fit(matrix, alpha=args.alpha, tol=args.tol, max_iter=args.max_iter)
    obj = {
        "strengths": result.strengths,
        "ranking": result.ranking,
        "iterations": result.iterations,
        "converged": result.converged,
        "alpha": result.alpha,
        "log_likelihood": result.log_likelihood,
    }
    print(json.dumps(obj, indent=2))
    return 0


def cmd_stats_kappa(args) -> int:
    from .stats import kappa, load_choices

    result = kappa(load_choices(Path(args.a)), load_choices(Path(args.b)))
    print(json.dumps({
        "n_items": result.n_items,
        "p_observed": result.p_observed,
        "p_expected": result.p_expected,
        "kappa": result.kappa,
    }, indent=2))
    return 0


def cmd_stats_mwu(args) -> int:
    from .stats import format_p, load_numbers, mann_whitney_u

    result = mann_whitney_u(load_numbers(Path(args.x)), load_numbers(Path(args.y)))
    print(json.dumps({
        "n1": result.n1, "n2": result.n2,
        "u1": result.u1, "u2": result.u2,
        "mu_u": result.mu_u, "sigma_u": result.sigma_u,
        "z": result.z,
        "p_one_sided": result.p_one_sided,
        "p_display": format_p(result.p_one_sided),
        "method": result.method,
    }, indent=2))
    return 0


def cmd_stats_mode(args) -> int:
    from .stats import load_choices, mode_aggregate

    judges = [load_choices(Path(p)) for p in args.in_paths]
    aggregate = mode_aggregate(judges)
    if args.out:
        Path(args.out).write_text("\n".join(aggregate) + "\n", encoding="utf-8")
    print(json.dumps({"items": len(aggregate), "judges": len(judges)}))
    return 0


def _read_lines(path: Path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def cmd_eval_bleu(args) -> int:
    from .texteval import bleu

    result = bleu(_read_lines(args.hyp), _read_lines(args.ref), max_n=args.max_n)
    print(json.dumps({
        "score": result.score,
        "precisions": result.precisions,
        "brevity_penalty": result.brevity_penalty,
        "hyp_tokens": result.hyp_tokens,
        "ref_tokens": result.ref_tokens,
    }, indent=2))
    return 0


def cmd_eval_em(args) -> int:
    from .texteval import exact_match

    accuracy = exact_match(_read_lines(args.pred), _read_lines(args.gold))
    print(json.dumps({"accuracy": accuracy}))
    return 0


def cmd_eval_lens(args) -> int:
    from .texteval import length_stats

    stats = length_stats(_read_lines(args.in_path), bin_width=args.bin_width)
    obj = {
        "count": stats.count,
        "mean": stats.mean,
        "bin_width": stats.bin_width,
        "histogram": {str(k): v for k, v in stats.histogram.items()},
    }
    if args.out:
        Path(args.out).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
    print(json.dumps({"count": stats.count, "mean": stats.mean}))
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaelkit", description=__doc__)
    parser.add_argument("--seed", type=int, default=0, help="global seed for stochastic stages")
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="compute manifest counts and emit document records")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ingest)

    dedup = sub.add_parser("dedup", help="containment measurement").add_subparsers(
        dest="subcommand", required=True
    )
    p = dedup.add_parser("shingle")
    p.add_argument("--manifest", required=True)
    p.add_argument("--width", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_dedup_shingle)
    p = dedup.add_parser("matrix")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--width", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_dedup_matrix)

    p = sub.add_parser("mix", help="segment, shuffle, pack, and split the corpus")
    p.add_argument("--manifest", required=True)
    p.add_argument("--plan", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--tokenizer", default="whitespace",
                   choices=["whitespace", "byte", "vocab"])
    p.add_argument("--vocab", default=None)
    p.set_defaults(fn=cmd_mix)

    synth = sub.add_parser("synth", help="LLM-backed dataset jobs").add_subparsers(
        dest="subcommand", required=True
    )

    def synth_common(p):
        p.add_argument("--provider", default="mock",
                       choices=["mock", "openai-style", "anthropic-style", "google-style"])
        p.add_argument("--cache", required=True, help="response cache directory")
        p.add_argument("--rate", type=float, default=None, help="requests per second")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--prices", default=None, help="JSON of model -> [in, out] prices")
        p.add_argument("--base-url", dest="base_url", default=None)

    p = synth.add_parser("gen")
    p.add_argument("--models", required=True, help="comma-separated model names")
    p.add_argument("--pools", required=True, help="two seed files, comma-separated")
    p.add_argument("--n", type=int, required=True, help="pairs per model (even)")
    p.add_argument("--temperature", type=float, default=0.7)
    p.add_argument("--out", required=True)
    synth_common(p)
    p.set_defaults(fn=cmd_synth_gen)

    p = synth.add_parser("translate")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--retry-out", default=None)
    p.add_argument("--temperature", type=float, default=0.0)
    synth_common(p)
    p.set_defaults(fn=cmd_synth_translate)

    p = synth.add_parser("pref")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--retry-out", default=None)
    p.add_argument("--temperature", type=float, default=0.0)
    synth_common(p)
    p.set_defaults(fn=cmd_synth_pref)

    arena = sub.add_parser("arena", help="build comparison sets").add_subparsers(
        dest="subcommand", required=True
    )
    p = arena.add_parser("build")
    p.add_argument("--models", required=True)
    p.add_argument("--per-pair", dest="per_pair", type=int, required=True)
    p.add_argument("--seeds", required=True, help="two seed files, comma-separated")
    p.add_argument("--gens", required=True, help="QA pair records")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_arena_build)
    p = arena.add_parser("pref")
    p.add_argument("--pairs", required=True)
    p.add_argument("--sample-n", dest="sample_n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_arena_pref)

    import os

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--comparisons", default=os.environ.get("GAELKIT_COMPARISONS"),
                   required="GAELKIT_COMPARISONS" not in os.environ)
    p.add_argument("--ledger", default=os.environ.get("GAELKIT_LEDGER"),
                   required="GAELKIT_LEDGER" not in os.environ)
    p.add_argument("--port", type=int, default=int(os.environ.get("GAELKIT_PORT", 8000)))
    p.add_argument("--host", default=os.environ.get("GAELKIT_HOST", "127.0.0.1"))
    p.add_argument("--ui", default=os.environ.get("GAELKIT_UI"),
                   help="static UI bundle directory")
    p.set_defaults(fn=cmd_serve)

    stats = sub.add_parser("stats", help="ranking and agreement statistics").add_subparsers(
        dest="subcommand", required=True
    )
    p = stats.add_parser("bt")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=10_000)
    p.set_defaults(fn=cmd_stats_bt)
    p = stats.add_parser("kappa")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(fn=cmd_stats_kappa)
    p = stats.add_parser("mwu")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.set_defaults(fn=cmd_stats_mwu)
    p = stats.add_parser("mode")
    p.add_argument("--in", dest="in_paths", nargs="+", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_stats_mode)

    ev = sub.add_parser("eval", help="score prediction files").add_subparsers(
        dest="subcommand", required=True
    )
    p = ev.add_parser("bleu")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--max-n", dest="max_n", type=int, default=4)
    p.set_defaults(fn=cmd_eval_bleu)
    p = ev.add_parser("em")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.set_defaults(fn=cmd_eval_em)
    p = ev.add_parser("lens")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--bin-width", dest="bin_width", type=int, default=10)
    p.set_defaults(fn=cmd_eval_lens)

    return parser


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except UsageError as err:
        print(json.dumps({"error": "usage", "message": str(err)}), file=sys.stderr)
        return 2
    except RecordValidationError as err:
        print(json.dumps({"error": "validation", "message": str(err)}), file=sys.stderr)
        return 1
    except FileNotFoundError as err:
        print(json.dumps({"error": "io", "message": str(err)}), file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(json.dumps({"error": err.__class__.__name__, "message": str(err)}),
              file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
