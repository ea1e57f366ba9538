from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from refrag.corpus import (
    Chunk,
    ChunkHeader,
    ingest_corpus,
    ingest_qa,
    render_chunk_text,
)
from refrag.errors import DataError


def write_jsonl(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")


def record(cid, body="Some body text.", source="test_report", split="train", header=None):
    return {"id": cid, "source": source, "header": header, "body": body, "split": split}


class TestIngestCorpus:
    def test_three_valid_records(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [record("a"), record("b"), record("c")])
        store = ingest_corpus(path)
        assert len(store) == 3
        for cid in ("a", "b", "c"):
            assert store[cid].id == cid

    def test_duplicate_id_names_id_and_line(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(
            path,
            [record("x"), record("TR-0001"), record("y"), record("z"), record("TR-0001")],
        )
        with pytest.raises(DataError) as err:
            ingest_corpus(path)
        assert "TR-0001" in str(err.value)
        assert "line 5" in str(err.value)

    def test_fixture_per_source_counts(self, store):
        assert store.counts_by_source() == {
            "test_report": 3,
            "meeting_note": 3,
            "textbook": 3,
        }

    def test_empty_body_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [record("a", body="   ")])
        with pytest.raises(DataError) as err:
            ingest_corpus(path)
        assert "line 1" in str(err.value)
        assert "body" in str(err.value)

    def test_missing_field_names_line_and_field(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [record("a"), {"id": "b", "source": "textbook", "split": "test"}])
        with pytest.raises(DataError) as err:
            ingest_corpus(path)
        assert "line 2" in str(err.value)
        assert "'body'" in str(err.value)

    def test_invalid_json_names_line(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"id": "a"\n', encoding="utf-8")
        with pytest.raises(DataError) as err:
            ingest_corpus(path)
        assert "line 1" in str(err.value)

    def test_unknown_source_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [record("a", source="wiki")])
        with pytest.raises(DataError) as err:
            ingest_corpus(path)
        assert "wiki" in str(err.value)

    def test_header_with_line_break_rejected(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [record("a", header={"test_name": "two\nlines"})])
        with pytest.raises(DataError) as err:
            ingest_corpus(path)
        assert "test_name" in str(err.value)

    def test_unsupported_format(self, tmp_path):
        path = tmp_path / "c.jsonl"
        write_jsonl(path, [record("a")])
        with pytest.raises(DataError):
            ingest_corpus(path, format="csv")

    def test_reingest_is_byte_identical(self, fixture_dir):
        first = ingest_corpus(fixture_dir / "corpus.jsonl")
        second = ingest_corpus(fixture_dir / "corpus.jsonl")
        assert first.serialized() == second.serialized()
        assert [c.id for c in first] == sorted(c.id for c in first)


class TestRenderChunkText:
    def test_no_header_ver1_is_body(self):
        chunk = Chunk(id="c", source="textbook", header=None, body="B", split="train")
        assert render_chunk_text(chunk, "ver1") == "B"
        assert render_chunk_text(chunk, "ver0") == "B"

    def test_ver0_ignores_header(self):
        chunk = Chunk(
            id="c",
            source="test_report",
            header=ChunkHeader(test_name="HGC frontal"),
            body="B",
            split="train",
        )
        assert render_chunk_text(chunk, "ver0") == "B"

    def test_header_template_bit_exact(self):
        chunk = Chunk(
            id="c",
            source="test_report",
            header=ChunkHeader(test_name="HGC frontal", region="EU"),
            body="Body text.",
            split="train",
        )
        assert (
            render_chunk_text(chunk, "ver1")
            == "## Test Name: HGC frontal\n## Region: EU\n\nBody text."
        )

    def test_field_order_is_fixed(self):
        chunk = Chunk(
            id="c",
            source="test_report",
            header=ChunkHeader(purpose="check", state="done", region="KR", test_name="T"),
            body="B",
            split="train",
        )
        assert render_chunk_text(chunk, "ver1") == (
            "## Test Name: T\n## Region: KR\n## State: done\n## Purpose: check\n\nB"
        )

    def test_unknown_version_rejected(self):
        chunk = Chunk(id="c", source="textbook", header=None, body="B", split="train")
        with pytest.raises(ValueError):
            render_chunk_text(chunk, "ver2")

    @given(
        body=st.text(min_size=1).filter(lambda t: t.strip()),
        test_name=st.none() | st.text(min_size=1).map(lambda t: t.replace("\n", " ").replace("\r", " ")).filter(lambda t: t.strip()),
        region=st.none() | st.sampled_from(["EU", "NA", "KR"]),
    )
    def test_ver0_is_suffix_of_ver1(self, body, test_name, region):
        header = None
        if test_name is not None or region is not None:
            header = ChunkHeader(test_name=test_name, region=region)
        chunk = Chunk(id="c", source="test_report", header=header, body=body, split="train")
        ver0 = render_chunk_text(chunk, "ver0")
        ver1 = render_chunk_text(chunk, "ver1")
        assert ver1.endswith(ver0)

    def test_fixture_headerless_chunks_render_identically(self, store):
        for chunk in store:
            if chunk.header is None:
                assert render_chunk_text(chunk, "ver0") == render_chunk_text(chunk, "ver1")


class TestChunkStore:
    def test_iteration_ascending_ids(self, store):
        ids = [chunk.id for chunk in store]
        assert ids == sorted(ids)
        assert store.ids() == ids

    def test_lookup_total_over_ingested_ids(self, store):
        for cid in store.ids():
            assert cid in store
            assert store[cid].id == cid
        assert store.get("NOPE") is None
        with pytest.raises(KeyError):
            store["NOPE"]

    def test_split_filter(self, store):
        assert [c.id for c in store.chunks(split="val")] == ["TR-0003"]
        with pytest.raises(DataError):
            store.chunks(split="dev")


class TestIngestQA:
    def test_two_valid_records(self, tmp_path, store):
        path = tmp_path / "qa.jsonl"
        write_jsonl(
            path,
            [
                {"qid": "q1", "question": "a?", "answer": "A.", "gold_chunk_ids": ["TR-0001"], "split": "train"},
                {"qid": "q2", "question": "b?", "answer": ["B.", "C."], "gold_chunk_ids": ["TB-0001", "TB-0002"], "split": "test"},
            ],
        )
        pairs = ingest_qa(path, store)
        assert len(pairs) == 2
        assert pairs[1].answer == ("B.", "C.")
        assert pairs[1].gold_chunk_ids == ("TB-0001", "TB-0002")

    def test_dangling_gold_id_names_qid_and_id(self, tmp_path, store):
        path = tmp_path / "qa.jsonl"
        write_jsonl(
            path,
            [{"qid": "q9", "question": "a?", "answer": "A.", "gold_chunk_ids": ["MISSING"], "split": "train"}],
        )
        with pytest.raises(DataError) as err:
            ingest_qa(path, store)
        assert "q9" in str(err.value)
        assert "MISSING" in str(err.value)

    def test_fixture_split_counts(self, qa_pairs):
        counts = {"train": 0, "val": 0, "test": 0}
        for pair in qa_pairs:
            counts[pair.split] += 1
        assert counts == {"train": 8, "val": 2, "test": 2}

    def test_duplicate_qid_rejected(self, tmp_path, store):
        path = tmp_path / "qa.jsonl"
        rec = {"qid": "q1", "question": "a?", "answer": "A.", "gold_chunk_ids": ["TR-0001"], "split": "train"}
        write_jsonl(path, [rec, rec])
        with pytest.raises(DataError) as err:
            ingest_qa(path, store)
        assert "q1" in str(err.value)

    def test_empty_gold_rejected(self, tmp_path, store):
        path = tmp_path / "qa.jsonl"
        write_jsonl(
            path,
            [{"qid": "q1", "question": "a?", "answer": "A.", "gold_chunk_ids": [], "split": "train"}],
        )
        with pytest.raises(DataError):
            ingest_qa(path, store)
