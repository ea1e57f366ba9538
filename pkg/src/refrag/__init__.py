"""Retrieval-augmented QA with segment-level answer-to-source alignment."""

from .corpus import Chunk, ChunkHeader, ChunkStore, QAPair, ingest_corpus, ingest_qa, render_chunk_text
from .errors import BackendError, DataError, ProtocolError, RefragError
from .evalkit import (
    EvalReport,
    ReferenceAnnotation,
    RetrievalRun,
    average_precision_at_k,
    aggregate_judge_scores,
    evaluate_run,
    precision_threshold_curve,
    rank_distribution,
    sentence_precision,
    success_at_k,
    win_tie_lose,
)
from .pipeline import (
    ExtractiveGenerator,
    GeneratedAnswer,
    Generator,
    RankedList,
    RemoteGenerator,
    generate,
    rerank,
    retrieve,
    split_sentences,
)
from .refmatch import (
    ReferenceAlignment,
    Segment,
    SegmentScoreMatrix,
    build_matrix,
    match_references,
    oracle_match,
    select_segments,
)
from .scoring import (
    LexicalScorer,
    RemoteScorer,
    Scorer,
    TrainingPair,
    export_training_pairs,
    lexical_score,
    remote_score_batch,
    tokenize,
)

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "Chunk",
    "ChunkHeader",
    "ChunkStore",
    "DataError",
    "EvalReport",
    "ExtractiveGenerator",
    "GeneratedAnswer",
    "Generator",
    "LexicalScorer",
    "ProtocolError",
    "QAPair",
    "RankedList",
    "ReferenceAlignment",
    "ReferenceAnnotation",
    "RefragError",
    "RemoteGenerator",
    "RemoteScorer",
    "RetrievalRun",
    "Scorer",
    "Segment",
    "SegmentScoreMatrix",
    "TrainingPair",
    "aggregate_judge_scores",
    "average_precision_at_k",
    "build_matrix",
    "evaluate_run",
    "export_training_pairs",
    "generate",
    "ingest_corpus",
    "ingest_qa",
    "lexical_score",
    "match_references",
    "oracle_match",
    "precision_threshold_curve",
    "rank_distribution",
    "remote_score_batch",
    "render_chunk_text",
    "rerank",
    "retrieve",
    "select_segments",
    "sentence_precision",
    "split_sentences",
    "success_at_k",
    "win_tie_lose",
]
