"""Retrieval metrics, sentence-level alignment precision, judge aggregation.

Conventions baked in here: queries that failed retrieval (or produced an
empty ranking) score 0 on every metric; answers with no referenced
sentence yield a no-data marker and are excluded from corpus means rather
than scored; judge outputs are consumed from files, never produced.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import QAPair
from .errors import DataError
from .refmatch import ReferenceAlignment

JUDGE_KINDS = ("single_score", "pairwise_rank")


# ---------------------------------------------------------------------------
# Ranking metrics
# ---------------------------------------------------------------------------

def average_precision_at_k(ranked: list[str], gold: set[str] | frozenset[str], k: int) -> float:
    """AP@k = sum of precision@r at gold ranks r <= k, over min(|gold|, k).

    An empty ranking (retrieval failure) scores 0.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not gold:
        raise ValueError("gold set is empty")
    if len(set(ranked)) != len(ranked):
        raise ValueError("ranked ids must be distinct")
    if not ranked:
        return 0.0
    hits = 0
    precision_sum = 0.0
    for rank, cid in enumerate(ranked[:k], start=1):
        if cid in gold:
            hits += 1
            precision_sum += hits / rank
    return precision_sum / min(len(gold), k)


def success_at_k(ranked: list[str], gold: set[str] | frozenset[str], k: int) -> int:
    """1 iff any of the first k ranked ids is gold; failures score 0."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not gold:
        raise ValueError("gold set is empty")
    return 1 if any(cid in gold for cid in ranked[:k]) else 0


@dataclass(frozen=True)
class RunRecord:
    """One query's ranking plus its gold ids."""

    qid: str
    ranked: tuple[str, ...]
    gold: frozenset[str]
    failed: bool = False

    def __post_init__(self) -> None:
        if len(set(self.ranked)) != len(self.ranked):
            raise DataError(f"qid {self.qid!r}: ranked ids are not distinct")
        if not self.gold:
            raise DataError(f"qid {self.qid!r} has no gold chunk ids")


@dataclass(frozen=True)
class RetrievalRun:
    """A full evaluation run, iterated in ascending qid order."""

    records: tuple[RunRecord, ...]

    def __post_init__(self) -> None:
        qids = [r.qid for r in self.records]
        if len(set(qids)) != len(qids):
            raise DataError("run contains duplicate qids")

    def ordered(self) -> list[RunRecord]:
        return sorted(self.records, key=lambda r: r.qid)


def load_run_records(path: str | Path) -> list[dict]:
    """Parse a run file: one `{"qid", "ranked", "failed"}` object per line."""
    out = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: line {lineno}: invalid JSON: {exc.msg}") from exc
        if "qid" not in record or "ranked" not in record:
            raise DataError(f"{path}: line {lineno}: run record needs 'qid' and 'ranked'")
        if not isinstance(record["ranked"], list):
            raise DataError(f"{path}: line {lineno}: 'ranked' must be a list")
        out.append(
            {
                "qid": record["qid"],
                "ranked": [str(cid) for cid in record["ranked"]],
                "failed": bool(record.get("failed", False)),
            }
        )
    return out


def build_run(raw_records: list[dict], qa_pairs: list[QAPair]) -> RetrievalRun:
    """Join run rankings with gold ids from QA pairs."""
    golds = {pair.qid: frozenset(pair.gold_chunk_ids) for pair in qa_pairs}
    records = []
    for raw in raw_records:
        qid = raw["qid"]
        if qid not in golds:
            raise DataError(f"run qid {qid!r} has no QA pair (no gold ids)")
        records.append(
            RunRecord(qid=qid, ranked=tuple(raw["ranked"]), gold=golds[qid], failed=raw["failed"])
        )
    return RetrievalRun(records=tuple(records))


@dataclass
class EvalReport:
    """Aggregate metric values plus the per-query breakdown behind them."""

    aggregates: dict[str, float]
    per_query: dict[str, dict[str, float]]
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "aggregates": self.aggregates,
            "per_query": self.per_query,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True, indent=2)

    def to_text(self) -> str:
        lines = []
        width = max(len(name) for name in self.aggregates) if self.aggregates else 0
        for name in sorted(self.aggregates):
            lines.append(f"{name.ljust(width)}  {self.aggregates[name]:.4f}")
        return "\n".join(lines)


def evaluate_run(run: RetrievalRun, ks: list[int]) -> EvalReport:
    """Mean AP@k and Success@k per requested k, with per-query breakdowns."""
    if not ks or any(k < 1 for k in ks):
        raise ValueError("ks must be a non-empty list of integers >= 1")
    records = run.ordered()
    if not records:
        raise DataError("run has no records")
    per_query: dict[str, dict[str, float]] = {}
    for record in records:
        row: dict[str, float] = {}
        for k in ks:
            if record.failed or not record.ranked:
                row[f"map@{k}"] = 0.0
                row[f"success@{k}"] = 0.0
            else:
                row[f"map@{k}"] = average_precision_at_k(list(record.ranked), record.gold, k)
                row[f"success@{k}"] = float(success_at_k(list(record.ranked), record.gold, k))
        per_query[record.qid] = row
    aggregates = {}
    for k in ks:
        for metric in (f"map@{k}", f"success@{k}"):
            aggregates[metric] = sum(per_query[r.qid][metric] for r in records) / len(records)
    return EvalReport(aggregates=aggregates, per_query=per_query, config={"ks": list(ks)})


# ---------------------------------------------------------------------------
# Sentence-level reference precision
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReferenceAnnotation:
    """Per-sentence sets of acceptable source chunk ids for one answer."""

    qid: str
    sentences: tuple[str, ...]
    sentence_refs: tuple[frozenset[str], ...]

    def __post_init__(self) -> None:
        if len(self.sentences) != len(self.sentence_refs):
            raise DataError(
                f"qid {self.qid!r}: {len(self.sentences)} sentences but"
                f" {len(self.sentence_refs)} reference sets"
            )
        if any(not refs for refs in self.sentence_refs):
            raise DataError(f"qid {self.qid!r}: empty sentence reference set")


def load_annotations(path: str | Path) -> list[ReferenceAnnotation]:
    out = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: line {lineno}: invalid JSON: {exc.msg}") from exc
        try:
            out.append(
                ReferenceAnnotation(
                    qid=record["qid"],
                    sentences=tuple(record["sentences"]),
                    sentence_refs=tuple(frozenset(refs) for refs in record["sentence_refs"]),
                )
            )
        except KeyError as exc:
            raise DataError(f"{path}: line {lineno}: missing field {exc}") from None
    return out


def load_alignments(path: str | Path) -> list[ReferenceAlignment]:
    out = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: line {lineno}: invalid JSON: {exc.msg}") from exc
        try:
            out.append(ReferenceAlignment.from_dict(record))
        except (KeyError, ValueError) as exc:
            raise DataError(f"{path}: line {lineno}: bad alignment record: {exc}") from None
    return out


def sentence_precision(
    alignment: ReferenceAlignment,
    annotation: ReferenceAnnotation,
) -> tuple[float | None, int]:
    """Fraction of referenced sentences whose primary chunk is annotated acceptable.

    Only sentences inside referenced segments count. Returns
    (precision, counted); precision is None when nothing was counted,
    and such answers are excluded from corpus averages.
    """
    n = alignment.sentence_count
    if n != len(annotation.sentence_refs):
        raise DataError(
            f"qid {annotation.qid!r}: alignment covers {n} sentences,"
            f" annotation has {len(annotation.sentence_refs)}"
        )
    counted = 0
    matched = 0
    for segment in alignment.segments:
        if not segment.referenced:
            continue
        for index in segment.sentence_indices():
            counted += 1
            if segment.primary in annotation.sentence_refs[index - 1]:
                matched += 1
    if counted == 0:
        return None, 0
    return matched / counted, counted


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    precision: float | None
    coverage: float

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "precision": self.precision, "coverage": self.coverage}


def precision_threshold_curve(
    pairs: list[tuple[ReferenceAlignment, ReferenceAnnotation]],
    thresholds: list[float],
) -> list[CurvePoint]:
    """Mean precision and sentence coverage as the referenced threshold rises."""
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be sorted ascending")
    if not pairs:
        raise DataError("no alignment/annotation pairs supplied")
    total_sentences = sum(alignment.sentence_count for alignment, _ in pairs)
    points = []
    for threshold in thresholds:
        precisions = []
        covered = 0
        for alignment, annotation in pairs:
            refit = alignment.with_threshold(threshold)
            precision, counted = sentence_precision(refit, annotation)
            covered += counted
            if precision is not None:
                precisions.append(precision)
        mean_precision = sum(precisions) / len(precisions) if precisions else None
        points.append(
            CurvePoint(
                threshold=threshold,
                precision=mean_precision,
                coverage=covered / total_sentences,
            )
        )
    return points


def curve_to_csv(points: list[CurvePoint]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["threshold", "precision", "coverage"])
    for point in points:
        writer.writerow(
            [
                point.threshold,
                "" if point.precision is None else point.precision,
                point.coverage,
            ]
        )
    return buffer.getvalue()


# ---------------------------------------------------------------------------
# Judge-output aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JudgeRecord:
    """One parsed judge output line (single-answer score or model ranking)."""

    qid: str
    kind: str
    model: str | None = None
    scores: dict[str, int] | None = None
    ranks: dict[str, int] | None = None

    def __post_init__(self) -> None:
        if self.kind not in JUDGE_KINDS:
            raise DataError(f"qid {self.qid!r}: unknown judge record kind {self.kind!r}")


def load_judge_records(path: str | Path) -> list[JudgeRecord]:
    """Parse a judge file, validating score ranges and rank permutations."""
    out = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: line {lineno}: invalid JSON: {exc.msg}") from exc
        kind = record.get("kind")
        qid = record.get("qid")
        if not qid or kind not in JUDGE_KINDS:
            raise DataError(f"{path}: line {lineno}: judge record needs 'qid' and a valid 'kind'")
        if kind == "single_score":
            model = record.get("model")
            scores = record.get("scores")
            if not model or not isinstance(scores, dict) or not scores:
                raise DataError(
                    f"{path}: line {lineno}: single_score record needs 'model' and 'scores'"
                )
            for metric, value in scores.items():
                if not isinstance(value, int) or not 1 <= value <= 5:
                    raise DataError(
                        f"{path}: line {lineno}: score for {metric!r} must be an integer in 1..5,"
                        f" got {value!r}"
                    )
            out.append(JudgeRecord(qid=qid, kind=kind, model=model, scores=dict(scores)))
        else:
            ranks = record.get("ranks")
            if not isinstance(ranks, dict) or not ranks:
                raise DataError(f"{path}: line {lineno}: pairwise_rank record needs 'ranks'")
            values = sorted(ranks.values())
            if values != list(range(1, len(ranks) + 1)):
                raise DataError(
                    f"{path}: line {lineno}: ranks must be a permutation of 1..{len(ranks)},"
                    f" got {values}"
                )
            out.append(JudgeRecord(qid=qid, kind=kind, ranks={m: int(r) for m, r in ranks.items()}))
    return out


@dataclass(frozen=True)
class JudgeAggregate:
    average: float
    histogram: tuple[int, int, int, int, int]

    def to_dict(self) -> dict:
        return {"average": self.average, "histogram": list(self.histogram)}


def aggregate_judge_scores(
    records: list[JudgeRecord],
    metrics: list[str] | None = None,
) -> dict[str, dict[str, JudgeAggregate]]:
    """Per-model, per-metric score averages with 1..5 histograms."""
    for record in records:
        if record.kind != "single_score":
            raise DataError(f"qid {record.qid!r}: expected single_score records only")
    if metrics is None:
        metrics = sorted({m for r in records for m in (r.scores or {})})
    histograms: dict[str, dict[str, list[int]]] = {}
    for record in records:
        assert record.model is not None and record.scores is not None
        per_model = histograms.setdefault(record.model, {m: [0] * 5 for m in metrics})
        for metric in metrics:
            if metric in record.scores:
                per_model[metric][record.scores[metric] - 1] += 1
    out: dict[str, dict[str, JudgeAggregate]] = {}
    for model in sorted(histograms):
        out[model] = {}
        for metric in metrics:
            hist = histograms[model][metric]
            total = sum(hist)
            if total == 0:
                continue
            average = sum(score * count for score, count in zip(range(1, 6), hist)) / total
            out[model][metric] = JudgeAggregate(average=average, histogram=tuple(hist))
    return out


def win_tie_lose(
    records: list[JudgeRecord],
    model_a: str,
    model_b: str,
    metric: str | None = None,
) -> tuple[int, int, int]:
    """Per-qid comparison of two models: higher score / lower rank wins."""
    kinds = {record.kind for record in records}
    if len(kinds) != 1:
        raise DataError("win_tie_lose needs records of a single kind")
    kind = kinds.pop()
    values: dict[str, dict[str, float]] = {}
    if kind == "single_score":
        if metric is None:
            raise ValueError("metric is required for single_score records")
        for record in records:
            assert record.model is not None and record.scores is not None
            if metric not in record.scores:
                raise DataError(f"qid {record.qid!r}: no {metric!r} score")
            values.setdefault(record.qid, {})[record.model] = float(record.scores[metric])
        better_is_higher = True
    else:
        for record in records:
            assert record.ranks is not None
            for model, rank in record.ranks.items():
                values.setdefault(record.qid, {})[model] = float(rank)
        better_is_higher = False
    wins = ties = losses = 0
    for qid in sorted(values):
        row = values[qid]
        if model_a not in row or model_b not in row:
            missing = model_a if model_a not in row else model_b
            raise DataError(f"qid {qid!r}: model {missing!r} missing from paired records")
        a, b = row[model_a], row[model_b]
        if a == b:
            ties += 1
        elif (a > b) == better_is_higher:
            wins += 1
        else:
            losses += 1
    return wins, ties, losses


def rank_distribution(
    records: list[JudgeRecord],
    models: list[str] | None = None,
) -> dict[str, list[float]]:
    """Fraction of records placing each model at rank 1..M (row-stochastic)."""
    for record in records:
        if record.kind != "pairwise_rank":
            raise DataError(f"qid {record.qid!r}: expected pairwise_rank records only")
    if not records:
        raise DataError("no rank records supplied")
    if models is None:
        models = sorted({m for r in records for m in (r.ranks or {})})
    m = len(models)
    counts = {model: [0] * m for model in models}
    for record in records:
        assert record.ranks is not None
        if set(record.ranks) != set(models):
            raise DataError(
                f"qid {record.qid!r}: record ranks models {sorted(record.ranks)},"
                f" expected {sorted(models)}"
            )
        for model, rank in record.ranks.items():
            if not 1 <= rank <= m:
                raise DataError(f"qid {record.qid!r}: rank {rank} outside 1..{m}")
            counts[model][rank - 1] += 1
    total = len(records)
    return {model: [c / total for c in counts[model]] for model in models}
