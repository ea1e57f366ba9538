"""Chunk store: corpus/QA ingestion, header rendering, split bookkeeping.

Corpus and QA files are JSONL, one record per line, so every error can
name the offending line. A store is sealed once built: re-ingesting a
file produces a new store, and sealed stores are safe to share across
threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DataError

SOURCES = ("test_report", "meeting_note", "textbook")
SPLITS = ("train", "val", "test")

# Rendering order of header fields is fixed; labels are the Markdown form.
HEADER_FIELDS = (
    ("test_name", "Test Name"),
    ("region", "Region"),
    ("state", "State"),
    ("purpose", "Purpose"),
)

VERSIONS = ("ver0", "ver1")


@dataclass(frozen=True)
class ChunkHeader:
    """Summary header prepended to a chunk: test name, region, state, purpose."""

    test_name: str | None = None
    region: str | None = None
    state: str | None = None
    purpose: str | None = None

    def __post_init__(self) -> None:
        values = [getattr(self, field) for field, _ in HEADER_FIELDS]
        if all(v is None for v in values):
            raise DataError("header present but all fields missing")
        for (field, _), value in zip(HEADER_FIELDS, values):
            if value is None:
                continue
            if not value.strip():
                raise DataError(f"header field {field!r} is empty")
            if "\n" in value or "\r" in value:
                raise DataError(f"header field {field!r} contains a line break")

    def items(self) -> list[tuple[str, str]]:
        """Present (label, value) pairs in rendering order."""
        return [
            (label, getattr(self, field))
            for field, label in HEADER_FIELDS
            if getattr(self, field) is not None
        ]

    def to_dict(self) -> dict[str, str]:
        return {field: getattr(self, field) for field, _ in HEADER_FIELDS if getattr(self, field) is not None}

    @classmethod
    def from_dict(cls, raw: dict) -> "ChunkHeader":
        known = {field for field, _ in HEADER_FIELDS}
        unknown = set(raw) - known
        if unknown:
            raise DataError(f"unknown header fields: {sorted(unknown)}")
        return cls(**{k: raw[k] for k in raw})


@dataclass(frozen=True)
class Chunk:
    """One retrievable Markdown unit (a slide or a textbook chapter)."""

    id: str
    source: str
    header: ChunkHeader | None
    body: str
    split: str

    def __post_init__(self) -> None:
        if not self.id:
            raise DataError("chunk id is empty")
        if self.source not in SOURCES:
            raise DataError(f"chunk {self.id!r}: unknown source {self.source!r}")
        if self.split not in SPLITS:
            raise DataError(f"chunk {self.id!r}: unknown split {self.split!r}")
        if not self.body.strip():
            raise DataError(f"chunk {self.id!r}: body is empty")

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "source": self.source,
            "header": self.header.to_dict() if self.header else None,
            "body": self.body,
            "split": self.split,
        }


@dataclass(frozen=True)
class QAPair:
    """Question, gold answer, and the chunk id(s) the answer came from."""

    qid: str
    question: str
    answer: str | tuple[str, ...]
    gold_chunk_ids: tuple[str, ...]
    split: str

    def __post_init__(self) -> None:
        if not self.qid:
            raise DataError("qa pair qid is empty")
        if not self.gold_chunk_ids:
            raise DataError(f"qa pair {self.qid!r}: gold_chunk_ids is empty")
        if self.split not in SPLITS:
            raise DataError(f"qa pair {self.qid!r}: unknown split {self.split!r}")

    @property
    def answer_text(self) -> str:
        if isinstance(self.answer, tuple):
            return " ".join(self.answer)
        return self.answer


class ChunkStore:
    """Sealed id -> Chunk map with deterministic (ascending id) iteration."""

    def __init__(self, chunks: Iterable[Chunk]) -> None:
        self._chunks: dict[str, Chunk] = {}
        for chunk in chunks:
            if chunk.id in self._chunks:
                raise DataError(f"duplicate chunk id {chunk.id!r}")
            self._chunks[chunk.id] = chunk
        self._order = sorted(self._chunks)

    def __len__(self) -> int:
        return len(self._chunks)

    def __contains__(self, chunk_id: str) -> bool:
        return chunk_id in self._chunks

    def __iter__(self) -> Iterator[Chunk]:
        for cid in self._order:
            yield self._chunks[cid]

    def __getitem__(self, chunk_id: str) -> Chunk:
        try:
            return self._chunks[chunk_id]
        except KeyError:
            raise KeyError(f"unknown chunk id {chunk_id!r}") from None

    def get(self, chunk_id: str) -> Chunk | None:
        return self._chunks.get(chunk_id)

    def ids(self) -> list[str]:
        return list(self._order)

    def chunks(self, split: str | None = None) -> list[Chunk]:
        if split is None:
            return [self._chunks[cid] for cid in self._order]
        if split not in SPLITS:
            raise DataError(f"unknown split {split!r}")
        return [self._chunks[cid] for cid in self._order if self._chunks[cid].split == split]

    def counts_by_source(self) -> dict[str, int]:
        counts = {source: 0 for source in SOURCES}
        for chunk in self:
            counts[chunk.source] += 1
        return counts

    def counts_by_split(self) -> dict[str, int]:
        counts = {split: 0 for split in SPLITS}
        for chunk in self:
            counts[chunk.split] += 1
        return counts

    def serialized(self) -> str:
        """Canonical JSONL form; byte-equal for stores with equal content."""
        lines = [json.dumps(chunk.to_record(), ensure_ascii=False, sort_keys=True) for chunk in self]
        return "\n".join(lines) + ("\n" if lines else "")


def render_chunk_text(chunk: Chunk, version: str) -> str:
    """Chunk text for retrieval/generation: ver0 = body, ver1 = header block + body.

    The ver1 header block is one ``## <Label>: <value>`` line per present
    field in fixed order, a blank line, then the body verbatim. Chunks
    without a header render identically under both versions.
    """
    if version not in VERSIONS:
        raise ValueError(f"unknown chunk text version {version!r}")
    if version == "ver0" or chunk.header is None:
        return chunk.body
    block = "".join(f"## {label}: {value}\n" for label, value in chunk.header.items())
    return block + "\n" + chunk.body


def _iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: line {lineno}: invalid JSON: {exc.msg}") from exc
        if not isinstance(record, dict):
            raise DataError(f"{path}: line {lineno}: record is not an object")
        yield lineno, record


def _require(record: dict, field: str, lineno: int, path: str | Path) -> object:
    if field not in record:
        raise DataError(f"{path}: line {lineno}: missing field {field!r}")
    return record[field]


def ingest_corpus(path: str | Path, format: str = "jsonl") -> ChunkStore:
    """Load a corpus file into a sealed ChunkStore.

    Errors name the offending line and field; duplicate ids name the id
    and the line of the second occurrence.
    """
    if format != "jsonl":
        raise DataError(f"unsupported corpus format {format!r}")
    chunks: dict[str, Chunk] = {}
    for lineno, record in _iter_jsonl(path):
        cid = _require(record, "id", lineno, path)
        if not isinstance(cid, str) or not cid:
            raise DataError(f"{path}: line {lineno}: field 'id' must be a non-empty string")
        if cid in chunks:
            raise DataError(f"{path}: line {lineno}: duplicate chunk id {cid!r}")
        source = _require(record, "source", lineno, path)
        body = _require(record, "body", lineno, path)
        split = _require(record, "split", lineno, path)
        raw_header = record.get("header")
        try:
            header = ChunkHeader.from_dict(raw_header) if raw_header else None
            chunk = Chunk(id=cid, source=source, header=header, body=body, split=split)
        except DataError as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from None
        except TypeError as exc:
            raise DataError(f"{path}: line {lineno}: bad header: {exc}") from None
        chunks[cid] = chunk
    return ChunkStore(chunks.values())


def ingest_qa(path: str | Path, store: ChunkStore) -> list[QAPair]:
    """Load QA pairs, checking every gold chunk id resolves in the store."""
    pairs: list[QAPair] = []
    seen: set[str] = set()
    for lineno, record in _iter_jsonl(path):
        qid = _require(record, "qid", lineno, path)
        if not isinstance(qid, str) or not qid:
            raise DataError(f"{path}: line {lineno}: field 'qid' must be a non-empty string")
        if qid in seen:
            raise DataError(f"{path}: line {lineno}: duplicate qid {qid!r}")
        seen.add(qid)
        question = _require(record, "question", lineno, path)
        answer = _require(record, "answer", lineno, path)
        gold = _require(record, "gold_chunk_ids", lineno, path)
        split = _require(record, "split", lineno, path)
        if not isinstance(gold, list) or not all(isinstance(g, str) for g in gold):
            raise DataError(f"{path}: line {lineno}: field 'gold_chunk_ids' must be a list of strings")
        if isinstance(answer, list):
            answer = tuple(answer)
        try:
            pair = QAPair(
                qid=qid,
                question=question,
                answer=answer,
                gold_chunk_ids=tuple(gold),
                split=split,
            )
        except DataError as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from None
        for gold_id in pair.gold_chunk_ids:
            if gold_id not in store:
                raise DataError(
                    f"{path}: line {lineno}: qid {qid!r}: unknown gold chunk id {gold_id!r}"
                )
        pairs.append(pair)
    return pairs
