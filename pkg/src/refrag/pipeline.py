"""Retrieve -> re-rank -> generate orchestration.

Retrieval scores every chunk in the store (exhaustive; corpus sizes here
do not justify an ANN index), re-ranking re-scores the retrieved
candidates with a second scorer, and generation runs through a pluggable
generator. With a pure scorer and a sealed store the whole pipeline is a
pure function of its inputs.
"""

from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass

import requests

from .corpus import ChunkStore, render_chunk_text
from .errors import BackendError, ProtocolError
from .scoring import Scorer, tokenize

logger = logging.getLogger(__name__)

STAGES = ("retrieval", "reranking")

# Split after ., !, ? or 。 followed by whitespace; end-of-text closes the
# final sentence. Evaluation data may arrive pre-split to sidestep this.
_SENTENCE_RE = re.compile(r"(?<=[.!?。])\s+")


def split_sentences(text: str) -> list[str]:
    parts = _SENTENCE_RE.split(text)
    return [part.strip() for part in parts if part.strip()]


@dataclass(frozen=True)
class RankedList:
    """Ordered (chunk_id, score) entries for one query at one stage."""

    qid: str
    stage: str
    entries: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise ValueError(f"unknown ranked-list stage {self.stage!r}")
        ids = [cid for cid, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("ranked list contains duplicate chunk ids")
        scores = [score for _, score in self.entries]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("ranked list scores must be non-increasing")

    def ids(self) -> list[str]:
        return [cid for cid, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class GeneratedAnswer:
    """Answer sentences for one question, tagged with the generator label."""

    qid: str
    sentences: tuple[str, ...]
    generator: str

    def __post_init__(self) -> None:
        if not self.sentences:
            raise ValueError("generated answer has no sentences")
        if any(not s.strip() for s in self.sentences):
            raise ValueError("generated answer contains an empty sentence")


def retrieve(
    question: str,
    store: ChunkStore,
    scorer: Scorer,
    version: str = "ver1",
    n: int = 10,
    qid: str = "",
) -> RankedList:
    """Exhaustively score all chunks and keep the top n (ties: ascending id)."""
    if len(store) == 0:
        raise ValueError("cannot retrieve from an empty store")
    if n < 1:
        raise ValueError("n must be >= 1")
    chunks = store.chunks()
    texts = [render_chunk_text(chunk, version) for chunk in chunks]
    scores = scorer.score_batch([(question, text) for text in texts])
    order = sorted(zip(chunks, scores), key=lambda cs: (-cs[1], cs[0].id))
    entries = tuple((chunk.id, float(score)) for chunk, score in order[:n])
    return RankedList(qid=qid, stage="retrieval", entries=entries)


def rerank(
    question: str,
    candidates: RankedList,
    store: ChunkStore,
    scorer: Scorer,
    version: str = "ver1",
    k: int = 5,
) -> RankedList:
    """Re-score retrieval candidates and keep the top k of them."""
    if candidates.stage != "retrieval":
        raise ValueError(f"rerank expects retrieval-stage candidates, got {candidates.stage!r}")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(candidates):
        raise ValueError(
            f"k={k} exceeds the {len(candidates)} retrieved candidates; retrieve with n >= k"
        )
    ids = candidates.ids()
    texts = [render_chunk_text(store[cid], version) for cid in ids]
    scores = scorer.score_batch([(question, text) for text in texts])
    order = sorted(zip(ids, scores), key=lambda cs: (-cs[1], cs[0]))
    entries = tuple((cid, float(score)) for cid, score in order[:k])
    return RankedList(qid=candidates.qid, stage="reranking", entries=entries)


class Generator:
    """Turns (question, ordered context chunk texts) into answer sentences."""

    identity: str = "generator"

    def generate(self, question: str, chunk_texts: list[str]) -> list[str]:
        raise NotImplementedError


class ExtractiveGenerator(Generator):
    """Deterministic offline fallback: per context chunk, emit the
    sentence(s) scoring highest against the question by token-set Jaccard.

    Markdown heading lines are dropped before sentence splitting so
    prepended chunk headers never leak into answers.
    """

    identity = "extractive"

    def __init__(self, budget: int = 1) -> None:
        if budget < 1:
            raise ValueError("budget must be >= 1")
        self.budget = budget

    def generate(self, question: str, chunk_texts: list[str]) -> list[str]:
        q_tokens = set(tokenize(question))
        out: list[str] = []
        for text in chunk_texts:
            prose = "\n".join(
                line for line in text.splitlines() if not line.lstrip().startswith("#")
            )
            sentences = split_sentences(prose)
            scored = []
            for position, sentence in enumerate(sentences):
                s_tokens = set(tokenize(sentence))
                union = q_tokens | s_tokens
                score = len(q_tokens & s_tokens) / len(union) if union else 0.0
                scored.append((-score, position, sentence))
            scored.sort()
            chosen = sorted(scored[: self.budget], key=lambda item: item[1])
            out.extend(sentence for _, _, sentence in chosen)
        return out


DEFAULT_INSTRUCTION = (
    "Answer the question using only the numbered context chunks below. "
    "Write complete sentences."
)


class RemoteGenerator(Generator):
    """HTTP client for a hosted generation model."""

    identity = "remote"

    def __init__(
        self,
        endpoint: str,
        *,
        timeout: float = 30.0,
        retries: int = 3,
        backoff: float = 0.1,
        max_tokens: int = 512,
        instruction: str = DEFAULT_INSTRUCTION,
    ) -> None:
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.max_tokens = max_tokens
        self.instruction = instruction

    def build_prompt(self, question: str, chunk_texts: list[str]) -> str:
        numbered = "\n\n".join(f"[{i}] {text}" for i, text in enumerate(chunk_texts, start=1))
        return f"{self.instruction}\n\n{numbered}\n\nQuestion: {question}"

    def generate(self, question: str, chunk_texts: list[str]) -> list[str]:
        payload = {"prompt": self.build_prompt(question, chunk_texts), "max_tokens": self.max_tokens}
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt > 0:
                logger.warning(
                    "retrying generator %s (retry %d of %d)", self.endpoint, attempt, self.retries
                )
                if self.backoff:
                    time.sleep(self.backoff)
            try:
                response = requests.post(self.endpoint, json=payload, timeout=self.timeout)
                if response.status_code >= 500:
                    raise requests.HTTPError(f"status {response.status_code}")
                if response.status_code != 200:
                    raise ProtocolError(
                        f"generator endpoint {self.endpoint} returned status {response.status_code}",
                        backend=self.identity,
                    )
                try:
                    body = response.json()
                except ValueError as exc:
                    raise ProtocolError(
                        f"generator endpoint {self.endpoint} returned a non-JSON payload",
                        backend=self.identity,
                    ) from exc
                text = body.get("text") if isinstance(body, dict) else None
                if not isinstance(text, str):
                    raise ProtocolError(
                        f"generator endpoint {self.endpoint} response missing 'text'",
                        backend=self.identity,
                    )
                return split_sentences(text)
            except requests.RequestException as exc:
                last_error = exc
        raise BackendError(
            f"generator endpoint {self.endpoint} failed after {self.retries} retries: {last_error}",
            backend=self.identity,
        )


def generate(
    question: str,
    context: RankedList,
    store: ChunkStore,
    generator: Generator,
    qid: str = "",
) -> GeneratedAnswer:
    """Generate an answer from the ordered Ver.1 texts of the context chunks."""
    if len(context) == 0:
        raise ValueError("generation context is empty")
    texts = [render_chunk_text(store[cid], "ver1") for cid in context.ids()]
    sentences = generator.generate(question, texts)
    sentences = [s for s in sentences if s.strip()]
    if not sentences:
        raise BackendError(
            f"generator {generator.identity!r} produced an empty answer",
            backend=generator.identity,
        )
    return GeneratedAnswer(qid=qid or context.qid, sentences=tuple(sentences), generator=generator.identity)
