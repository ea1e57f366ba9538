"""HTTP facade: query, standalone matching, chunk lookup, health.

The app is stateless across requests; the sealed chunk store and the
pure scorers are shared by concurrent handlers. Identical /v1/match
bodies always produce identical responses, which the trace UI relies on
for its threshold slider.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .config import ServiceConfig
from .corpus import Chunk, ChunkStore, ingest_corpus, render_chunk_text
from .errors import BackendError, DataError
from .pipeline import (
    ExtractiveGenerator,
    GeneratedAnswer,
    Generator,
    RankedList,
    RemoteGenerator,
    generate,
    rerank,
    retrieve,
)
from .refmatch import MODES, match_references
from .scoring import LexicalScorer, RemoteScorer, Scorer

logger = logging.getLogger(__name__)


class ServiceError(Exception):
    """Maps to an HTTP error with a machine-readable code."""

    def __init__(self, status: int, code: str, message: str) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class Engine:
    """Everything a request handler needs, built once at startup."""

    config: ServiceConfig
    store: ChunkStore
    retrieval_scorer: Scorer
    rerank_scorer: Scorer
    generator: Generator


def build_engine(config: ServiceConfig, store: ChunkStore | None = None) -> Engine:
    if store is None:
        if not config.corpus:
            raise DataError("no corpus path configured")
        store = ingest_corpus(config.corpus)
    if config.scorer == "lexical":
        retrieval_scorer: Scorer = LexicalScorer()
        rerank_scorer: Scorer = retrieval_scorer
    else:
        if not config.retrieval_endpoint or not config.rerank_endpoint:
            raise DataError("remote scorer backend needs retrieval_endpoint and rerank_endpoint")
        retrieval_scorer = RemoteScorer(
            config.retrieval_endpoint,
            mode="embed_similarity",
            sep_token=config.sep_token,
            timeout=config.timeout,
            batch_size=config.batch_size,
            retries=config.retries,
            max_in_flight=config.max_in_flight,
            identity="remote-retrieval",
        )
        rerank_scorer = RemoteScorer(
            config.rerank_endpoint,
            mode="pairwise",
            sep_token=config.sep_token,
            timeout=config.timeout,
            batch_size=config.batch_size,
            retries=config.retries,
            max_in_flight=config.max_in_flight,
            identity="remote-rerank",
        )
    if config.generator == "extractive":
        generator: Generator = ExtractiveGenerator(budget=config.budget)
    else:
        if not config.generator_endpoint:
            raise DataError("remote generator backend needs generator_endpoint")
        generator = RemoteGenerator(
            config.generator_endpoint,
            timeout=config.timeout,
            retries=config.retries,
            max_tokens=config.max_tokens,
        )
    return Engine(
        config=config,
        store=store,
        retrieval_scorer=retrieval_scorer,
        rerank_scorer=rerank_scorer,
        generator=generator,
    )


def _question_qid(question: str) -> str:
    return "q-" + hashlib.sha1(question.encode("utf-8")).hexdigest()[:10]


def _chunk_payload(chunk: Chunk) -> dict:
    return {
        "id": chunk.id,
        "source": chunk.source,
        "split": chunk.split,
        "header": chunk.header.to_dict() if chunk.header else None,
        "ver0": render_chunk_text(chunk, "ver0"),
        "ver1": render_chunk_text(chunk, "ver1"),
    }


def create_app(config: ServiceConfig, store: ChunkStore | None = None) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        app.state.engine = build_engine(config, store=store)
        logger.info("engine ready: %d chunks", len(app.state.engine.store))
        yield

    app = FastAPI(title="refrag", version="0.1.0", lifespan=lifespan)
    app.state.engine = None
    log_lock = threading.Lock()

    if config.cors_origin:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=[config.cors_origin],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.exception_handler(ServiceError)
    async def service_error_handler(_request: Request, exc: ServiceError) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status,
            content={"error": {"code": exc.code, "message": exc.message}},
        )

    def engine_or_503() -> Engine:
        engine = app.state.engine
        if engine is None:
            raise ServiceError(503, "not_ready", "corpus store is not sealed yet")
        return engine

    def log_request(kind: str, payload: dict) -> None:
        if not config.request_log:
            return
        entry = {"ts": time.time(), "kind": kind, **payload}
        with log_lock:
            with open(config.request_log, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(entry, ensure_ascii=False) + "\n")

    @app.get("/v1/health")
    def health() -> dict:
        engine = engine_or_503()
        return {
            "status": "ok",
            "corpus_size": len(engine.store),
            "scorer": {
                "retrieval": engine.retrieval_scorer.identity,
                "rerank": engine.rerank_scorer.identity,
            },
            "generator": engine.generator.identity,
            "defaults": {
                "n": engine.config.n,
                "k": engine.config.k,
                "threshold": engine.config.resolved_threshold,
                "tie_epsilon": engine.config.tie_epsilon,
                "mode": engine.config.mode,
                "version": engine.config.version,
            },
        }

    @app.get("/v1/chunks/{chunk_id}")
    def get_chunk(chunk_id: str) -> dict:
        engine = engine_or_503()
        chunk = engine.store.get(chunk_id)
        if chunk is None:
            raise ServiceError(404, "unknown_chunk", f"unknown chunk id {chunk_id!r}")
        return _chunk_payload(chunk)

    @app.post("/v1/query")
    async def query(request: Request) -> dict:
        engine = engine_or_503()
        body = await _json_body(request)
        question = str(body.get("question", "")).strip()
        if not question:
            raise ServiceError(400, "empty_question", "question must be non-empty")
        cfg = engine.config
        n = _int_field(body, "n", cfg.n)
        k = _int_field(body, "k", cfg.k)
        threshold = _float_field(body, "threshold", cfg.resolved_threshold)
        tie_epsilon = _float_field(body, "tie_epsilon", cfg.tie_epsilon)
        mode = _mode_field(body, cfg.mode)
        if not (n >= k >= 1):
            raise ServiceError(400, "bad_depths", f"need n >= k >= 1, got n={n}, k={k}")
        if tie_epsilon < 0:
            raise ServiceError(400, "bad_tie_epsilon", "tie_epsilon must be >= 0")
        n = min(n, len(engine.store))
        k = min(k, n)
        qid = _question_qid(question)
        try:
            retrieved = retrieve(
                question, engine.store, engine.retrieval_scorer, cfg.version, n, qid=qid
            )
            reranked = rerank(
                question, retrieved, engine.store, engine.rerank_scorer, cfg.version, k
            )
            answer = generate(question, reranked, engine.store, engine.generator, qid=qid)
            alignment = match_references(
                answer,
                reranked,
                engine.store,
                engine.rerank_scorer,
                threshold=threshold,
                tie_epsilon=tie_epsilon,
                mode=mode,
            )
        except BackendError as exc:
            raise ServiceError(502, "backend_error", f"backend {exc.backend!r} failed: {exc}")
        referenced_ids = sorted({cid for seg in alignment.segments for cid in seg.chunk_ids})
        log_request("query", {"qid": qid, "question": question, "n": n, "k": k})
        return {
            "qid": qid,
            "question": question,
            "answer_sentences": list(answer.sentences),
            "generator": answer.generator,
            "alignment": alignment.to_dict(),
            "segments": [segment.to_dict() for segment in alignment.segments],
            "reranked": [[cid, score] for cid, score in reranked.entries],
            "retrieved": [[cid, score] for cid, score in retrieved.entries],
            "chunk_bodies": {cid: engine.store[cid].body for cid in referenced_ids},
        }

    @app.post("/v1/match")
    async def match(request: Request) -> dict:
        engine = engine_or_503()
        body = await _json_body(request)
        sentences = body.get("sentences")
        if not isinstance(sentences, list) or not sentences or not all(
            isinstance(s, str) and s.strip() for s in sentences
        ):
            raise ServiceError(400, "bad_sentences", "sentences must be non-empty strings")
        cfg = engine.config
        threshold = _float_field(body, "threshold", cfg.resolved_threshold)
        tie_epsilon = _float_field(body, "tie_epsilon", cfg.tie_epsilon)
        mode = _mode_field(body, cfg.mode)
        if tie_epsilon < 0:
            raise ServiceError(400, "bad_tie_epsilon", "tie_epsilon must be >= 0")

        chunk_ids = body.get("chunk_ids")
        inline = body.get("chunks")
        if chunk_ids and inline:
            raise ServiceError(400, "ambiguous_chunks", "give chunk_ids or inline chunks, not both")
        if chunk_ids:
            if not isinstance(chunk_ids, list) or not all(isinstance(c, str) for c in chunk_ids):
                raise ServiceError(400, "bad_chunk_ids", "chunk_ids must be a list of strings")
            for cid in chunk_ids:
                if cid not in engine.store:
                    raise ServiceError(400, "unknown_chunk", f"unknown chunk id {cid!r}")
            match_store = engine.store
            ids = list(chunk_ids)
        elif inline:
            if not isinstance(inline, list) or not all(
                isinstance(c, dict) and c.get("id") and isinstance(c.get("text"), str)
                for c in inline
            ):
                raise ServiceError(
                    400, "bad_chunks", "inline chunks must be {id, text} objects"
                )
            try:
                match_store = ChunkStore(
                    Chunk(id=c["id"], source="textbook", header=None, body=c["text"], split="test")
                    for c in inline
                )
            except DataError as exc:
                raise ServiceError(400, "bad_chunks", str(exc))
            ids = [c["id"] for c in inline]
        else:
            raise ServiceError(400, "missing_chunks", "request needs chunk_ids or inline chunks")

        cells = len(sentences) * len(ids)
        if cells > cfg.max_match_cells:
            raise ServiceError(
                413,
                "too_many_cells",
                f"{len(sentences)} sentences x {len(ids)} chunks = {cells} cells exceeds"
                f" the limit of {cfg.max_match_cells}",
            )
        answer = GeneratedAnswer(
            qid=str(body.get("qid", "match")), sentences=tuple(sentences), generator="client"
        )
        ranked = RankedList(
            qid=answer.qid, stage="reranking", entries=tuple((cid, 0.0) for cid in ids)
        )
        try:
            alignment = match_references(
                answer,
                ranked,
                match_store,
                engine.rerank_scorer,
                threshold=threshold,
                tie_epsilon=tie_epsilon,
                mode=mode,
            )
        except BackendError as exc:
            raise ServiceError(502, "backend_error", f"backend {exc.backend!r} failed: {exc}")
        log_request("match", {"qid": answer.qid, "sentences": len(sentences), "chunks": len(ids)})
        return alignment.to_dict()

    return app


async def _json_body(request: Request) -> dict:
    try:
        body = await request.json()
    except Exception:
        raise ServiceError(400, "bad_json", "request body must be a JSON object")
    if not isinstance(body, dict):
        raise ServiceError(400, "bad_json", "request body must be a JSON object")
    return body


def _int_field(body: dict, name: str, default: int) -> int:
    value = body.get(name)
    if value is None:
        return default
    if not isinstance(value, int) or isinstance(value, bool):
        raise ServiceError(400, f"bad_{name}", f"{name} must be an integer")
    return value


def _float_field(body: dict, name: str, default: float) -> float:
    value = body.get(name)
    if value is None:
        return default
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ServiceError(400, f"bad_{name}", f"{name} must be a number")
    return float(value)


def _mode_field(body: dict, default: str) -> str:
    value = body.get("mode")
    if value is None:
        return default
    if value not in MODES:
        raise ServiceError(400, "bad_mode", f"mode must be one of {MODES}")
    return value
