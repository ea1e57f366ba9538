"""Segment-level answer-to-source alignment.

Every contiguous run of answer sentences is scored against every context
chunk, the best segment per end position is chained backwards into a
partition of the answer, and each segment is flagged referenced or not
against a score threshold.

Two selection modes exist. ``paper_literal`` picks, for each end
position, the single highest-scoring (start, chunk) candidate and chains
those choices from the last sentence backwards. ``global_sum`` maximizes
the summed score over all contiguous partitions and chunk assignments.
``oracle_match`` recomputes either result by brute force with no shared
selection code, for verification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .corpus import ChunkStore, render_chunk_text
from .errors import RefragError
from .pipeline import GeneratedAnswer, RankedList
from .scoring import Scorer

MODES = ("paper_literal", "global_sum")

ORACLE_MAX_SENTENCES = 12


@dataclass(frozen=True)
class SegmentScoreMatrix:
    """Scores for every (start, end, chunk) cell, 1-based inclusive indices."""

    n: int
    chunk_ids: tuple[str, ...]
    scores: dict[tuple[int, int, str], float]

    def __post_init__(self) -> None:
        expected = self.n * (self.n + 1) // 2 * len(self.chunk_ids)
        if len(self.scores) != expected:
            raise ValueError(
                f"segment score matrix has {len(self.scores)} entries, expected {expected}"
            )
        for key, value in self.scores.items():
            if not math.isfinite(value):
                raise ValueError(f"non-finite score at {key}")

    def score(self, start: int, end: int, chunk_id: str) -> float:
        return self.scores[(start, end, chunk_id)]

    def position(self, chunk_id: str) -> int:
        return self.chunk_ids.index(chunk_id)


@dataclass(frozen=True)
class Segment:
    """One contiguous sentence run with its supporting chunk(s)."""

    start: int
    end: int
    chunk_ids: tuple[str, ...]
    score: float
    referenced: bool

    def __post_init__(self) -> None:
        if self.start < 1 or self.end < self.start:
            raise ValueError(f"invalid segment bounds ({self.start}, {self.end})")
        if not self.chunk_ids:
            raise ValueError("segment has no chunks")

    @property
    def primary(self) -> str:
        return self.chunk_ids[0]

    def sentence_indices(self) -> range:
        return range(self.start, self.end + 1)

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            "chunk_ids": list(self.chunk_ids),
            "score": self.score,
            "referenced": self.referenced,
        }


@dataclass(frozen=True)
class ReferenceAlignment:
    """Ordered segments covering the whole answer exactly once."""

    qid: str
    segments: tuple[Segment, ...]
    threshold: float
    mode: str

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown alignment mode {self.mode!r}")
        if not self.segments:
            raise ValueError("alignment has no segments")
        if self.segments[0].start != 1:
            raise ValueError("first segment must start at sentence 1")
        for prev, cur in zip(self.segments, self.segments[1:]):
            if cur.start != prev.end + 1:
                raise ValueError(
                    f"segments ({prev.start},{prev.end}) and ({cur.start},{cur.end})"
                    " do not tile the answer"
                )

    @property
    def sentence_count(self) -> int:
        return self.segments[-1].end

    def segment_for(self, sentence_index: int) -> Segment:
        for segment in self.segments:
            if segment.start <= sentence_index <= segment.end:
                return segment
        raise IndexError(f"sentence index {sentence_index} outside 1..{self.sentence_count}")

    def with_threshold(self, threshold: float) -> "ReferenceAlignment":
        """Re-flag segments against a new threshold; segmentation is unchanged."""
        segments = tuple(
            replace(segment, referenced=segment.score >= threshold) for segment in self.segments
        )
        return ReferenceAlignment(
            qid=self.qid, segments=segments, threshold=threshold, mode=self.mode
        )

    def to_dict(self) -> dict:
        return {
            "qid": self.qid,
            "mode": self.mode,
            "threshold": self.threshold,
            "segments": [segment.to_dict() for segment in self.segments],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ReferenceAlignment":
        segments = tuple(
            Segment(
                start=entry["start"],
                end=entry["end"],
                chunk_ids=tuple(entry["chunk_ids"]),
                score=float(entry["score"]),
                referenced=bool(entry["referenced"]),
            )
            for entry in raw["segments"]
        )
        return cls(
            qid=raw["qid"],
            segments=segments,
            threshold=float(raw["threshold"]),
            mode=raw["mode"],
        )


def _segment_text(sentences: tuple[str, ...], start: int, end: int) -> str:
    return " ".join(sentences[start - 1 : end])


def build_matrix(
    answer: GeneratedAnswer,
    chunks: RankedList,
    store: ChunkStore,
    scorer: Scorer,
) -> SegmentScoreMatrix:
    """Score every contiguous sentence run against every chunk's Ver.1 text.

    Exactly n(n+1)/2 * k scorer calls, one per cell; scorer failures are
    re-raised with the offending (start, end, chunk) attached.
    """
    n = len(answer.sentences)
    if len(chunks) == 0:
        raise ValueError("cannot build a segment score matrix without chunks")
    texts = {cid: render_chunk_text(store[cid], "ver1") for cid in chunks.ids()}
    scores: dict[tuple[int, int, str], float] = {}
    for start in range(1, n + 1):
        for end in range(start, n + 1):
            segment = _segment_text(answer.sentences, start, end)
            for cid in chunks.ids():
                try:
                    scores[(start, end, cid)] = float(scorer.score(segment, texts[cid]))
                except RefragError as exc:
                    raise type(exc)(
                        f"scoring segment ({start},{end}) against chunk {cid!r}: {exc}"
                    ) from exc
    return SegmentScoreMatrix(n=n, chunk_ids=tuple(chunks.ids()), scores=scores)


def _best_for_end(matrix: SegmentScoreMatrix, end: int) -> tuple[int, str, float]:
    """Highest-scoring (start, chunk) among cells ending at ``end``.

    Ties prefer the smaller start (longer segment), then the chunk that
    appears earlier in the ranked list.
    """
    best: tuple[float, int, int] | None = None
    best_cell: tuple[int, str, float] | None = None
    for start in range(1, end + 1):
        for position, cid in enumerate(matrix.chunk_ids):
            score = matrix.score(start, end, cid)
            key = (-score, start, position)
            if best is None or key < best:
                best = key
                best_cell = (start, cid, score)
    assert best_cell is not None
    return best_cell


def select_segments(
    matrix: SegmentScoreMatrix,
    mode: str = "paper_literal",
) -> list[tuple[int, int, str, float]]:
    """Choose the segment partition and chunk assignment for a score matrix.

    Returns (start, end, chunk_id, score) tuples in document order.
    """
    if mode not in MODES:
        raise ValueError(f"unknown selection mode {mode!r}")
    if mode == "paper_literal":
        return _select_paper_literal(matrix)
    return _select_global_sum(matrix)


def _select_paper_literal(matrix: SegmentScoreMatrix) -> list[tuple[int, int, str, float]]:
    # Per end position j, keep the argmax cell (i, j, t); backtracking from
    # j = n then jumps to end position i - 1, which tiles 1..n exactly.
    best: dict[int, tuple[int, str, float]] = {}
    for end in range(1, matrix.n + 1):
        best[end] = _best_for_end(matrix, end)
    out: list[tuple[int, int, str, float]] = []
    current = matrix.n
    while current > 0:
        start, cid, score = best[current]
        out.append((start, current, cid, score))
        current = start - 1
    out.reverse()
    return out


def _select_global_sum(matrix: SegmentScoreMatrix) -> list[tuple[int, int, str, float]]:
    # dp[j] = best total score for sentences 1..j; ties at each end prefer
    # the smaller start, then the earlier ranked-list chunk, which yields
    # the canonical partition when chained from the end.
    dp = [0.0] * (matrix.n + 1)
    choice: dict[int, tuple[int, str, float]] = {}
    for end in range(1, matrix.n + 1):
        best_key: tuple[float, int, int] | None = None
        best_cell: tuple[int, str, float] | None = None
        for start in range(1, end + 1):
            base = dp[start - 1]
            for position, cid in enumerate(matrix.chunk_ids):
                total = base + matrix.score(start, end, cid)
                key = (-total, start, position)
                if best_key is None or key < best_key:
                    best_key = key
                    best_cell = (start, cid, matrix.score(start, end, cid))
        assert best_key is not None and best_cell is not None
        dp[end] = -best_key[0]
        choice[end] = best_cell
    out: list[tuple[int, int, str, float]] = []
    current = matrix.n
    while current > 0:
        start, cid, score = choice[current]
        out.append((start, current, cid, score))
        current = start - 1
    out.reverse()
    return out


def match_references(
    answer: GeneratedAnswer,
    chunks: RankedList,
    store: ChunkStore,
    scorer: Scorer,
    threshold: float = 0.0,
    tie_epsilon: float = 0.0,
    mode: str = "paper_literal",
) -> ReferenceAlignment:
    """Align every answer segment with the chunk(s) supporting it.

    With ``tie_epsilon`` > 0, every chunk scoring within the epsilon of
    the selected chunk is attached after it (ranked-list order); at 0 the
    segment carries the single selected chunk. Segments scoring below
    ``threshold`` keep their chunks but are flagged unreferenced.
    """
    if tie_epsilon < 0:
        raise ValueError("tie_epsilon must be >= 0")
    if not math.isfinite(threshold):
        raise ValueError("threshold must be finite")
    matrix = build_matrix(answer, chunks, store, scorer)
    selected = select_segments(matrix, mode)
    segments = []
    for start, end, primary, score in selected:
        attached = [primary]
        if tie_epsilon > 0:
            attached += [
                cid
                for cid in matrix.chunk_ids
                if cid != primary and matrix.score(start, end, cid) >= score - tie_epsilon
            ]
        segments.append(
            Segment(
                start=start,
                end=end,
                chunk_ids=tuple(attached),
                score=score,
                referenced=score >= threshold,
            )
        )
    return ReferenceAlignment(
        qid=answer.qid, segments=tuple(segments), threshold=threshold, mode=mode
    )


def oracle_match(
    answer: GeneratedAnswer,
    chunks: RankedList,
    store: ChunkStore,
    scorer: Scorer,
    mode: str = "paper_literal",
) -> list[tuple[int, int, str, float]]:
    """Brute-force reference for select_segments; shares no selection code.

    paper_literal re-scans all candidates at every backtrack step;
    global_sum explicitly enumerates all 2^(n-1) contiguous partitions,
    scanning every chunk per segment (the summed objective decomposes per
    segment, so the per-segment scan covers all chunk assignments).
    """
    if mode not in MODES:
        raise ValueError(f"unknown selection mode {mode!r}")
    sentences = answer.sentences
    n = len(sentences)
    if n > ORACLE_MAX_SENTENCES:
        raise ValueError(f"oracle_match handles at most {ORACLE_MAX_SENTENCES} sentences, got {n}")
    order = chunks.ids()
    texts = {cid: render_chunk_text(store[cid], "ver1") for cid in order}
    table: dict[tuple[int, int, str], float] = {}
    for i in range(1, n + 1):
        for j in range(i, n + 1):
            piece = " ".join(sentences[i - 1 : j])
            for cid in order:
                table[(i, j, cid)] = float(scorer.score(piece, texts[cid]))

    if mode == "paper_literal":
        result: list[tuple[int, int, str, float]] = []
        current = n
        while current > 0:
            # (score, start, position, chunk) of the best cell ending here.
            best: tuple[float, int, int, str] | None = None
            for i in range(1, current + 1):
                for position, cid in enumerate(order):
                    score = table[(i, current, cid)]
                    if (
                        best is None
                        or score > best[0]
                        or (score == best[0] and (i, position) < (best[1], best[2]))
                    ):
                        best = (score, i, position, cid)
            assert best is not None
            result.append((best[1], current, best[3], best[0]))
            current = best[1] - 1
        result.reverse()
        return result

    best_total: float | None = None
    best_key: tuple | None = None
    best_segments: list[tuple[int, int, str, float]] | None = None
    for mask in range(2 ** (n - 1)):
        bounds = [0] + [b + 1 for b in range(n - 1) if mask >> b & 1] + [n]
        total = 0.0
        segments: list[tuple[int, int, str, float]] = []
        positions: list[int] = []
        for idx in range(len(bounds) - 1):
            i, j = bounds[idx] + 1, bounds[idx + 1]
            seg_best: tuple[float, int, str] | None = None
            for position, cid in enumerate(order):
                score = table[(i, j, cid)]
                if seg_best is None or score > seg_best[0]:
                    seg_best = (score, position, cid)
            assert seg_best is not None
            total = total + seg_best[0]
            segments.append((i, j, seg_best[2], seg_best[0]))
            positions.append(seg_best[1])
        # Tie preference mirrors the backtracking direction: compare the
        # (start, ranked position) keys from the last segment backwards.
        key = tuple(
            (segments[idx][0], positions[idx]) for idx in range(len(segments) - 1, -1, -1)
        )
        if best_total is None or total > best_total or (total == best_total and key < best_key):
            best_total = total
            best_key = key
            best_segments = segments
    assert best_segments is not None
    return best_segments
