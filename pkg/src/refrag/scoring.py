"""Scorers and ranking-model training data export.

One scorer abstraction backs all three stages (retrieval, re-ranking,
reference matching). The lexical scorer is a deterministic stand-in used
for offline runs and oracle tests; trained models plug in through the
remote scorer client.
"""

from __future__ import annotations

import json
import logging
import random
import re
import threading
import time
from dataclasses import dataclass

import requests

from .corpus import ChunkStore, QAPair, render_chunk_text
from .errors import BackendError, DataError, ProtocolError

logger = logging.getLogger(__name__)

# Unicode alphanumeric runs, lowercased; underscores and punctuation split.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

SCORER_MODES = ("embed_similarity", "pairwise")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class Scorer:
    """Pure (query, document) -> relevance score; higher is more relevant."""

    identity: str = "scorer"

    def score(self, query_text: str, doc_text: str) -> float:
        raise NotImplementedError

    def score_batch(self, pairs: list[tuple[str, str]]) -> list[float]:
        return [self.score(q, d) for q, d in pairs]


class LexicalScorer(Scorer):
    """Jaccard coefficient over token sets; symmetric, range [0, 1]."""

    identity = "lexical"

    def score(self, query_text: str, doc_text: str) -> float:
        return lexical_score(query_text, doc_text)


def lexical_score(q: str, d: str) -> float:
    """Jaccard coefficient of the two token sets."""
    q_tokens = set(tokenize(q))
    d_tokens = set(tokenize(d))
    if not q_tokens:
        raise DataError("lexical_score: query side has no tokens")
    if not d_tokens:
        raise DataError("lexical_score: document side has no tokens")
    return len(q_tokens & d_tokens) / len(q_tokens | d_tokens)


class RemoteScorer(Scorer):
    """HTTP client for a trained scoring backend.

    ``pairwise`` mode posts the concatenated ``<q> <sep_token> <d>`` pair
    and expects scalar scores; ``embed_similarity`` posts texts separately
    and combines the returned vectors by inner product. Transient failures
    are retried up to ``retries`` times per batch.
    """

    def __init__(
        self,
        endpoint: str,
        mode: str = "pairwise",
        *,
        sep_token: str = "[SEP]",
        timeout: float = 10.0,
        batch_size: int = 32,
        retries: int = 3,
        backoff: float = 0.1,
        max_in_flight: int = 4,
        identity: str | None = None,
    ) -> None:
        if mode not in SCORER_MODES:
            raise ValueError(f"unknown remote scorer mode {mode!r}")
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.endpoint = endpoint
        self.mode = mode
        self.sep_token = sep_token
        self.timeout = timeout
        self.batch_size = batch_size
        self.retries = retries
        self.backoff = backoff
        self.identity = identity or f"remote-{mode}"
        self._sem = threading.BoundedSemaphore(max_in_flight)

    def score(self, query_text: str, doc_text: str) -> float:
        return self.score_batch([(query_text, doc_text)])[0]

    def score_batch(self, pairs: list[tuple[str, str]]) -> list[float]:
        if not pairs:
            return []
        if self.mode == "pairwise":
            inputs = [f"{q} {self.sep_token} {d}" for q, d in pairs]
            scores: list[float] = []
            for index, batch in enumerate(_batched(inputs, self.batch_size)):
                payload = self._post({"mode": "pairwise", "inputs": batch}, index)
                scores.extend(_expect_scores(payload, len(batch), self.endpoint))
            return scores
        # embed_similarity: one embedding per distinct text, then dot products.
        texts = sorted({t for pair in pairs for t in pair})
        vectors: dict[str, list[float]] = {}
        for index, batch in enumerate(_batched(texts, self.batch_size)):
            payload = self._post({"mode": "embed", "inputs": batch}, index)
            vecs = _expect_vectors(payload, len(batch), self.endpoint)
            for text, vec in zip(batch, vecs):
                vectors[text] = vec
        return [_dot(vectors[q], vectors[d], self.endpoint) for q, d in pairs]

    def _post(self, payload: dict, batch_index: int) -> dict:
        retry_count = 0
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt > 0:
                retry_count += 1
                logger.warning(
                    "retrying scorer batch %d against %s (retry %d of %d)",
                    batch_index, self.endpoint, retry_count, self.retries,
                )
                if self.backoff:
                    time.sleep(self.backoff)
            try:
                with self._sem:
                    response = requests.post(self.endpoint, json=payload, timeout=self.timeout)
                if response.status_code >= 500:
                    # Transient server-side failure: retry.
                    raise requests.HTTPError(f"status {response.status_code}")
                if response.status_code != 200:
                    raise ProtocolError(
                        f"scorer endpoint {self.endpoint} returned status {response.status_code}"
                        f" on batch {batch_index}",
                        backend=self.identity,
                    )
                try:
                    body = response.json()
                except ValueError as exc:
                    raise ProtocolError(
                        f"scorer endpoint {self.endpoint} returned a non-JSON payload"
                        f" on batch {batch_index}",
                        backend=self.identity,
                    ) from exc
                if not isinstance(body, dict):
                    raise ProtocolError(
                        f"scorer endpoint {self.endpoint} returned a non-object payload",
                        backend=self.identity,
                    )
                if retry_count:
                    logger.info(
                        "scorer batch %d against %s succeeded after %d retries",
                        batch_index, self.endpoint, retry_count,
                    )
                return body
            except requests.RequestException as exc:
                last_error = exc
        raise BackendError(
            f"scorer endpoint {self.endpoint} failed on batch {batch_index}"
            f" after {self.retries} retries: {last_error}",
            backend=self.identity,
        )


def remote_score_batch(scorer: Scorer, pairs: list[tuple[str, str]]) -> list[float]:
    """Score (query, doc) pairs in order; no network call for an empty list."""
    return scorer.score_batch(pairs)


def _batched(items: list, size: int) -> list[list]:
    return [items[i : i + size] for i in range(0, len(items), size)]


def _expect_scores(payload: dict, count: int, endpoint: str) -> list[float]:
    scores = payload.get("scores")
    if not isinstance(scores, list) or len(scores) != count:
        raise ProtocolError(f"scorer endpoint {endpoint}: expected {count} scores, got {scores!r}")
    if not all(isinstance(s, (int, float)) for s in scores):
        raise ProtocolError(f"scorer endpoint {endpoint}: non-numeric score in response")
    return [float(s) for s in scores]


def _expect_vectors(payload: dict, count: int, endpoint: str) -> list[list[float]]:
    vectors = payload.get("vectors")
    if not isinstance(vectors, list) or len(vectors) != count:
        raise ProtocolError(f"scorer endpoint {endpoint}: expected {count} vectors")
    cleaned = []
    for vec in vectors:
        if not isinstance(vec, list) or not all(isinstance(x, (int, float)) for x in vec):
            raise ProtocolError(f"scorer endpoint {endpoint}: malformed vector in response")
        cleaned.append([float(x) for x in vec])
    return cleaned


def _dot(a: list[float], b: list[float], endpoint: str) -> float:
    if len(a) != len(b):
        raise ProtocolError(f"scorer endpoint {endpoint}: vector length mismatch")
    return sum(x * y for x, y in zip(a, b))


@dataclass(frozen=True)
class TrainingPair:
    """One labeled (question, chunk) example for ranking-model training."""

    qid: str
    question: str
    chunk_id: str
    chunk_text: str
    label: int

    def to_record(self) -> dict:
        return {
            "qid": self.qid,
            "question": self.question,
            "chunk_id": self.chunk_id,
            "chunk_text": self.chunk_text,
            "label": self.label,
        }


NEGATIVES_PER_GOLD = 3
NEGATIVE_POOL_DEPTH = 10


def export_training_pairs(
    pairs: list[QAPair],
    store: ChunkStore,
    scorer: Scorer,
    seed: int,
) -> list[TrainingPair]:
    """Build positive/negative training pairs from train-split QA data.

    Per (qid, gold chunk): one positive, then the top-10 train-split
    chunks by scorer (all golds of the qid excluded) are sampled without
    replacement for exactly three negatives. Sampling is seeded per
    (seed, qid, gold) so output is byte-stable for a fixed seed.
    """
    train_chunks = store.chunks(split="train")
    texts = {chunk.id: render_chunk_text(chunk, "ver1") for chunk in train_chunks}
    out: list[TrainingPair] = []
    for pair in pairs:
        gold_set = set(pair.gold_chunk_ids)
        candidates = [chunk for chunk in train_chunks if chunk.id not in gold_set]
        if len(candidates) < NEGATIVES_PER_GOLD:
            raise DataError(
                f"qid {pair.qid!r}: only {len(candidates)} non-gold train chunks available,"
                f" need at least {NEGATIVES_PER_GOLD}"
            )
        scores = scorer.score_batch([(pair.question, texts[c.id]) for c in candidates])
        ranked = sorted(zip(candidates, scores), key=lambda cs: (-cs[1], cs[0].id))
        pool = [chunk for chunk, _ in ranked[:NEGATIVE_POOL_DEPTH]]
        for gold_id in pair.gold_chunk_ids:
            gold_chunk = store.get(gold_id)
            if gold_chunk is None:
                raise DataError(f"qid {pair.qid!r}: unknown gold chunk id {gold_id!r}")
            out.append(
                TrainingPair(
                    qid=pair.qid,
                    question=pair.question,
                    chunk_id=gold_id,
                    chunk_text=render_chunk_text(gold_chunk, "ver1"),
                    label=1,
                )
            )
            rng = random.Random(f"{seed}|{pair.qid}|{gold_id}")
            for negative in rng.sample(pool, NEGATIVES_PER_GOLD):
                out.append(
                    TrainingPair(
                        qid=pair.qid,
                        question=pair.question,
                        chunk_id=negative.id,
                        chunk_text=texts[negative.id],
                        label=0,
                    )
                )
    return out


def training_pairs_to_jsonl(pairs: list[TrainingPair]) -> str:
    lines = [json.dumps(p.to_record(), ensure_ascii=False) for p in pairs]
    return "\n".join(lines) + ("\n" if lines else "")
