import json
import tracemalloc

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaelkit.records import (
    Document,
    InstructionRecord,
    ParallelInstructionRecord,
    PreferencePair,
    RecordValidationError,
    SourceManifest,
    UsageError,
    dumps_record,
    read_records,
    stable_key,
    stable_key_int,
    write_records,
)


def test_stable_key_deterministic():
    assert stable_key("a", "b") == stable_key("a", "b")
    assert stable_key_int(["x", "y"]) == stable_key_int(["x", "y"])


def test_stable_key_length_prefix_prevents_ambiguity():
    assert stable_key("a", "b") != stable_key("ab")
    assert stable_key("ab", "c") != stable_key("a", "bc")


def test_stable_key_rejects_empty_parts():
    with pytest.raises(UsageError):
        stable_key_int([])


def test_stable_key_no_collisions_on_arena_scale():
    keys = set()
    for i in range(100):
        for j in range(100):
            keys.add(stable_key("generation-arena", f"model-{i}", f"model-{j}", f"seed-{i*j}"))
    assert len(keys) == 100 * 100


def test_stable_key_is_pinned():
    # documented FNV-1a values; a change here breaks every key ever written
    assert stable_key("a") == "e6017d3a248deb69"
    assert stable_key("a", "b") == "9dbd0e0e67e641dc"


@given(st.lists(st.text(min_size=0, max_size=20), min_size=1, max_size=5))
def test_stable_key_fixed_width_hex(parts):
    key = stable_key(*parts)
    assert len(key) == 16
    int(key, 16)


def _some_records():
    return [
        InstructionRecord("What is the capital?", "", "Dublin is the capital.", "open_qa", "en"),
        InstructionRecord("Translate this.", "Some context.", "Aistriúchán.", "translation", "ga"),
        InstructionRecord("Summarise.", "", "Achoimre ghairid.", "summarization", "ga"),
    ]


def test_round_trip_identity(tmp_path):
    path = tmp_path / "records.jsonl"
    records = _some_records()
    assert write_records(path, records) == 3
    back = list(read_records(path, InstructionRecord))
    assert back == records


def test_round_trip_bytes_stable(tmp_path):
    path = tmp_path / "records.jsonl"
    write_records(path, _some_records())
    first = path.read_bytes()
    write_records(path, list(read_records(path, InstructionRecord)))
    assert path.read_bytes() == first


def test_missing_field_names_line_and_field(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = dumps_record(_some_records()[0])
    bad = json.dumps({"instruction": "x", "context": "", "category": "", "lang": "en"})
    path.write_text(good + "\n" + bad + "\n", encoding="utf-8")
    with pytest.raises(RecordValidationError) as err:
        list(read_records(path, InstructionRecord))
    assert "line 2" in str(err.value)
    assert "response" in str(err.value)


def test_malformed_json_names_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text("{not json}\n", encoding="utf-8")
    with pytest.raises(RecordValidationError) as err:
        list(read_records(path, InstructionRecord))
    assert "line 1" in str(err.value)


def test_streaming_keeps_memory_bounded(tmp_path):
    path = tmp_path / "big.jsonl"
    filler = "lorem ipsum dolor sit amet " * 4
    with open(path, "w", encoding="utf-8") as handle:
        for i in range(30_000):
            handle.write(
                dumps_record(
                    InstructionRecord(f"inst {i} {filler}", "", f"resp {i} {filler}", "qa", "en")
                )
                + "\n"
            )
    assert path.stat().st_size > 5_000_000
    tracemalloc.start()
    count = 0
    for _ in read_records(path, InstructionRecord):
        count += 1
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    assert count == 30_000
    assert peak < 8_000_000  # far below file size: one record resident at a time


@given(
    st.text(min_size=1, max_size=50),
    st.text(max_size=50),
    st.text(min_size=1, max_size=50),
)
@settings(max_examples=50)
def test_instruction_record_round_trips_any_text(instruction, context, response):
    rec = InstructionRecord(instruction, context, response, "cat", "en")
    line = dumps_record(rec)
    assert InstructionRecord.from_obj(json.loads(line)) == rec


def test_document_make_counts_scalars():
    doc = Document.make("src", "ga", "Dáil Éireann")
    assert doc.char_count == 12
    assert doc.id == stable_key("src", "Dáil Éireann")


def test_document_rejects_bad_lang():
    with pytest.raises(RecordValidationError):
        Document.make("src", "fr", "bonjour")


def test_document_char_count_validated_on_read(tmp_path):
    doc = Document.make("src", "en", "hello")
    obj = json.loads(dumps_record(doc))
    obj["char_count"] = 99
    path = tmp_path / "docs.jsonl"
    path.write_text(json.dumps(obj) + "\n", encoding="utf-8")
    with pytest.raises(RecordValidationError) as err:
        list(read_records(path, Document))
    assert "char_count" in str(err.value)


def test_parallel_record_enforces_side_languages():
    en = InstructionRecord("q", "", "a", "qa", "en")
    ga = InstructionRecord("c", "", "f", "qa", "ga")
    ParallelInstructionRecord(en=en, ga=ga, source_id="row-1")
    with pytest.raises(RecordValidationError):
        ParallelInstructionRecord(en=ga, ga=ga, source_id="row-1")


def test_preference_pair_rejects_identical_sides():
    with pytest.raises(RecordValidationError):
        PreferencePair("p", "same", "same", "row-1")


def test_manifest_proportions_sum_to_one():
    manifest = SourceManifest.build(
        [("a", "a.txt", "en", 123), ("b", "b.txt", "ga", 877), ("c", "c.txt", "ga", 500)]
    )
    assert abs(sum(manifest.proportions().values()) - 1.0) < 1e-9
    assert manifest.proportions()["a"] == 123 / 1500


@given(st.lists(st.integers(min_value=1, max_value=10**9), min_size=1, max_size=12))
@settings(max_examples=100)
def test_manifest_proportions_always_normalize(counts):
    rows = [(f"s{i}", f"s{i}.txt", "ga", c) for i, c in enumerate(counts)]
    manifest = SourceManifest.build(rows)
    assert abs(sum(manifest.proportions().values()) - 1.0) < 1e-9


def test_manifest_save_load(tmp_path):
    manifest = SourceManifest.build([("a", "a.txt", "en", 10), ("b", "b.txt", "ga", 30)])
    path = tmp_path / "manifest.json"
    manifest.save(path)
    loaded = SourceManifest.load(path)
    assert loaded.proportions() == manifest.proportions()
    assert loaded.total_chars() == 40
