"""Batch entry points: ingest, query, match, evaluate, export, serve.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 backend error.
"""

from __future__ import annotations

import json
import sys

import click

from . import evalkit
from .config import load_config
from .corpus import QAPair, SPLITS, ingest_corpus, ingest_qa
from .errors import BackendError, DataError, RefragError
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
from .refmatch import match_references
from .scoring import LexicalScorer, RemoteScorer, Scorer, export_training_pairs, training_pairs_to_jsonl

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3

_MODE_CHOICES = click.Choice(["paper-literal", "global-sum"])


def _mode_value(flag: str) -> str:
    return flag.replace("-", "_")


def _build_scorer(scorer: str, endpoint: str, mode: str, sep_token: str, retries: int) -> Scorer:
    if scorer == "lexical":
        return LexicalScorer()
    if not endpoint:
        raise click.UsageError("--scorer remote requires --scorer-endpoint")
    return RemoteScorer(endpoint, mode=mode, sep_token=sep_token, retries=retries)


def _build_generator(generator: str, endpoint: str, budget: int, retries: int) -> Generator:
    if generator == "extractive":
        return ExtractiveGenerator(budget=budget)
    if not endpoint:
        raise click.UsageError("--generator remote requires --generator-endpoint")
    return RemoteGenerator(endpoint, retries=retries)


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as handle:
            handle.write(text if text.endswith("\n") else text + "\n")
    else:
        click.echo(text)


def _default_threshold(threshold: float | None, scorer: str) -> float:
    if threshold is not None:
        return threshold
    return 0.0 if scorer == "lexical" else 0.5


corpus_option = click.option("--corpus", required=True, type=click.Path(exists=True, dir_okay=False))
json_option = click.option("--json", "as_json", is_flag=True, help="Emit the JSON report schema.")
out_option = click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write output to a file.")


@click.group()
def cli() -> None:
    """Retrieval-augmented QA engine with answer-to-source alignment."""


@cli.command()
@corpus_option
@click.option("--qa", type=click.Path(exists=True, dir_okay=False), default=None)
@json_option
def ingest(corpus: str, qa: str | None, as_json: bool) -> None:
    """Validate a corpus (and optional QA) file and report counts."""
    store = ingest_corpus(corpus)
    report: dict = {
        "chunks": {
            "total": len(store),
            "by_source": store.counts_by_source(),
            "by_split": store.counts_by_split(),
        }
    }
    if qa:
        pairs = ingest_qa(qa, store)
        by_split = {split: 0 for split in SPLITS}
        for pair in pairs:
            by_split[pair.split] += 1
        report["qa"] = {"total": len(pairs), "by_split": by_split}
    if as_json:
        click.echo(json.dumps(report, ensure_ascii=False, sort_keys=True, indent=2))
        return
    chunks = report["chunks"]
    sources = ", ".join(f"{k}={v}" for k, v in sorted(chunks["by_source"].items()))
    splits = ", ".join(f"{k}={chunks['by_split'][k]}" for k in SPLITS)
    click.echo(f"corpus: {chunks['total']} chunks ({sources}; {splits})")
    if "qa" in report:
        qa_splits = ", ".join(f"{k}={report['qa']['by_split'][k]}" for k in SPLITS)
        click.echo(f"qa: {report['qa']['total']} pairs ({qa_splits})")


def _ranked_lines(ranked: RankedList) -> str:
    return "\n".join(
        f"{rank}. {cid}  {score:.6f}"
        for rank, (cid, score) in enumerate(ranked.entries, start=1)
    )


@cli.command(name="retrieve")
@corpus_option
@click.option("--question", required=True)
@click.option("--version", type=click.Choice(["ver0", "ver1"]), default="ver1", show_default=True)
@click.option("--n", type=int, default=10, show_default=True)
@click.option("--scorer", type=click.Choice(["lexical", "remote"]), default="lexical", show_default=True)
@click.option("--scorer-endpoint", default="")
@click.option("--scorer-mode", type=click.Choice(["pairwise", "embed_similarity"]), default="embed_similarity")
@click.option("--sep-token", default="[SEP]", show_default=True)
@click.option("--retries", type=int, default=3, show_default=True)
@json_option
@out_option
def retrieve_cmd(
    corpus: str, question: str, version: str, n: int, scorer: str, scorer_endpoint: str,
    scorer_mode: str, sep_token: str, retries: int, as_json: bool, out: str | None,
) -> None:
    """Rank all chunks against a question and print the top n."""
    store = ingest_corpus(corpus)
    backend = _build_scorer(scorer, scorer_endpoint, scorer_mode, sep_token, retries)
    ranked = retrieve(question, store, backend, version, n)
    if as_json:
        _emit(json.dumps({"stage": ranked.stage, "entries": [[c, s] for c, s in ranked.entries]}), out)
    else:
        _emit(_ranked_lines(ranked), out)


@cli.command(name="rerank")
@corpus_option
@click.option("--question", required=True)
@click.option("--version", type=click.Choice(["ver0", "ver1"]), default="ver1", show_default=True)
@click.option("--n", type=int, default=10, show_default=True)
@click.option("--k", type=int, default=5, show_default=True)
@click.option("--scorer", type=click.Choice(["lexical", "remote"]), default="lexical", show_default=True)
@click.option("--scorer-endpoint", default="")
@click.option("--sep-token", default="[SEP]", show_default=True)
@click.option("--retries", type=int, default=3, show_default=True)
@json_option
@out_option
def rerank_cmd(
    corpus: str, question: str, version: str, n: int, k: int, scorer: str,
    scorer_endpoint: str, sep_token: str, retries: int, as_json: bool, out: str | None,
) -> None:
    """Retrieve top n, re-rank, and print the top k."""
    if k > n:
        raise click.UsageError(f"--k {k} must not exceed --n {n}")
    store = ingest_corpus(corpus)
    backend = _build_scorer(scorer, scorer_endpoint, "pairwise", sep_token, retries)
    candidates = retrieve(question, store, backend, version, n)
    reranked = rerank(question, candidates, store, backend, version, min(k, len(candidates)))
    if as_json:
        _emit(json.dumps({"stage": reranked.stage, "entries": [[c, s] for c, s in reranked.entries]}), out)
    else:
        _emit(_ranked_lines(reranked), out)


@cli.command(name="query")
@corpus_option
@click.option("--question", required=True)
@click.option("--version", type=click.Choice(["ver0", "ver1"]), default="ver1", show_default=True)
@click.option("--n", type=int, default=10, show_default=True)
@click.option("--k", type=int, default=5, show_default=True)
@click.option("--threshold", type=float, default=None, help="Defaults to 0 (lexical) or 0.5 (remote).")
@click.option("--tie-epsilon", type=float, default=0.0, show_default=True)
@click.option("--mode", type=_MODE_CHOICES, default="paper-literal", show_default=True)
@click.option("--scorer", type=click.Choice(["lexical", "remote"]), default="lexical", show_default=True)
@click.option("--scorer-endpoint", default="")
@click.option("--sep-token", default="[SEP]", show_default=True)
@click.option("--generator", type=click.Choice(["extractive", "remote"]), default="extractive", show_default=True)
@click.option("--generator-endpoint", default="")
@click.option("--budget", type=int, default=1, show_default=True, help="Sentences per chunk for the extractive generator.")
@click.option("--retries", type=int, default=3, show_default=True)
@json_option
@out_option
def query_cmd(
    corpus: str, question: str, version: str, n: int, k: int, threshold: float | None,
    tie_epsilon: float, mode: str, scorer: str, scorer_endpoint: str, sep_token: str,
    generator: str, generator_endpoint: str, budget: int, retries: int,
    as_json: bool, out: str | None,
) -> None:
    """Run retrieve -> rerank -> generate -> match and print the alignment."""
    if k > n:
        raise click.UsageError(f"--k {k} must not exceed --n {n}")
    store = ingest_corpus(corpus)
    n = min(n, len(store))
    k = min(k, n)
    backend = _build_scorer(scorer, scorer_endpoint, "pairwise", sep_token, retries)
    gen = _build_generator(generator, generator_endpoint, budget, retries)
    resolved = _default_threshold(threshold, scorer)
    retrieved = retrieve(question, store, backend, version, n)
    reranked = rerank(question, retrieved, store, backend, version, k)
    answer = generate(question, reranked, store, gen)
    alignment = match_references(
        answer, reranked, store, backend,
        threshold=resolved, tie_epsilon=tie_epsilon, mode=_mode_value(mode),
    )
    if as_json:
        payload = {
            "question": question,
            "answer_sentences": list(answer.sentences),
            "generator": answer.generator,
            "alignment": alignment.to_dict(),
            "reranked": [[c, s] for c, s in reranked.entries],
            "retrieved": [[c, s] for c, s in retrieved.entries],
        }
        _emit(json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2), out)
        return
    lines = []
    for segment in alignment.segments:
        tag = "referenced" if segment.referenced else "unreferenced"
        lines.append(
            f"[{segment.start}-{segment.end}] -> {','.join(segment.chunk_ids)}"
            f"  score={segment.score:.4f}  ({tag})"
        )
        for index in segment.sentence_indices():
            lines.append(f"  {index}. {answer.sentences[index - 1]}")
    lines.append("")
    lines.append("reranked:")
    lines.append(_ranked_lines(reranked))
    _emit("\n".join(lines), out)


@cli.command(name="match")
@corpus_option
@click.option("--sentence", "sentences", multiple=True, help="Answer sentence (repeatable).")
@click.option("--sentences-file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON file with a list of sentences.")
@click.option("--chunk-id", "chunk_ids", multiple=True, required=True, help="Context chunk id (repeatable).")
@click.option("--threshold", type=float, default=None)
@click.option("--tie-epsilon", type=float, default=0.0, show_default=True)
@click.option("--mode", type=_MODE_CHOICES, default="paper-literal", show_default=True)
@click.option("--scorer", type=click.Choice(["lexical", "remote"]), default="lexical", show_default=True)
@click.option("--scorer-endpoint", default="")
@click.option("--sep-token", default="[SEP]", show_default=True)
@click.option("--retries", type=int, default=3, show_default=True)
@json_option
@out_option
def match_cmd(
    corpus: str, sentences: tuple[str, ...], sentences_file: str | None,
    chunk_ids: tuple[str, ...], threshold: float | None, tie_epsilon: float, mode: str,
    scorer: str, scorer_endpoint: str, sep_token: str, retries: int,
    as_json: bool, out: str | None,
) -> None:
    """Align given answer sentences with the given chunks."""
    sentence_list = list(sentences)
    if sentences_file:
        with open(sentences_file, encoding="utf-8") as handle:
            loaded = json.load(handle)
        if not isinstance(loaded, list) or not all(isinstance(s, str) for s in loaded):
            raise DataError(f"{sentences_file}: expected a JSON list of sentences")
        sentence_list.extend(loaded)
    if not sentence_list:
        raise click.UsageError("give at least one --sentence or a --sentences-file")
    store = ingest_corpus(corpus)
    for cid in chunk_ids:
        if cid not in store:
            raise DataError(f"unknown chunk id {cid!r}")
    backend = _build_scorer(scorer, scorer_endpoint, "pairwise", sep_token, retries)
    answer = GeneratedAnswer(qid="match", sentences=tuple(sentence_list), generator="client")
    ranked = RankedList(qid="match", stage="reranking", entries=tuple((c, 0.0) for c in chunk_ids))
    alignment = match_references(
        answer, ranked, store, backend,
        threshold=_default_threshold(threshold, scorer),
        tie_epsilon=tie_epsilon, mode=_mode_value(mode),
    )
    if as_json:
        _emit(json.dumps(alignment.to_dict(), ensure_ascii=False, sort_keys=True, indent=2), out)
        return
    lines = []
    for segment in alignment.segments:
        tag = "referenced" if segment.referenced else "unreferenced"
        lines.append(
            f"[{segment.start}-{segment.end}] -> {','.join(segment.chunk_ids)}"
            f"  score={segment.score:.4f}  ({tag})"
        )
    _emit("\n".join(lines), out)


@cli.command(name="eval-retrieval")
@click.option("--run", "run_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--qa", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Validate gold ids against this corpus.")
@click.option("--ks", default="1,5,10", show_default=True, help="Comma-separated k values.")
@json_option
@out_option
def eval_retrieval_cmd(
    run_path: str, qa: str, corpus: str | None, ks: str, as_json: bool, out: str | None
) -> None:
    """Score a run file with MAP@k and Success@k."""
    try:
        k_values = [int(item) for item in ks.split(",") if item.strip()]
    except ValueError:
        raise click.UsageError(f"--ks must be comma-separated integers, got {ks!r}")
    if corpus:
        store = ingest_corpus(corpus)
        qa_pairs = ingest_qa(qa, store)
    else:
        qa_pairs = _load_qa_unchecked(qa)
    run = evalkit.build_run(evalkit.load_run_records(run_path), qa_pairs)
    report = evalkit.evaluate_run(run, k_values)
    _emit(report.to_json() if as_json else report.to_text(), out)


def _load_qa_unchecked(path: str) -> list[QAPair]:
    # Run files may rank over a corpus that is not at hand; parse the QA
    # records without resolving gold ids against a store.
    pairs = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: invalid JSON: {exc.msg}") from exc
            answer = record.get("answer", "")
            if isinstance(answer, list):
                answer = tuple(answer)
            pairs.append(
                QAPair(
                    qid=record["qid"],
                    question=record.get("question", ""),
                    answer=answer,
                    gold_chunk_ids=tuple(record["gold_chunk_ids"]),
                    split=record.get("split", "test"),
                )
            )
    return pairs


@cli.command(name="eval-match")
@click.option("--alignments", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--annotations", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--thresholds", default="0,0.25,0.5,0.75", show_default=True)
@click.option("--csv-out", type=click.Path(dir_okay=False), default=None, help="Write curve points as CSV.")
@json_option
@out_option
def eval_match_cmd(
    alignments: str, annotations: str, thresholds: str, csv_out: str | None,
    as_json: bool, out: str | None,
) -> None:
    """Sentence-level precision and its threshold curve."""
    try:
        taus = [float(item) for item in thresholds.split(",") if item.strip()]
    except ValueError:
        raise click.UsageError(f"--thresholds must be comma-separated numbers, got {thresholds!r}")
    aligns = evalkit.load_alignments(alignments)
    annos = {a.qid: a for a in evalkit.load_annotations(annotations)}
    pairs = []
    for alignment in aligns:
        if alignment.qid not in annos:
            raise DataError(f"no annotation for qid {alignment.qid!r}")
        pairs.append((alignment, annos[alignment.qid]))
    baseline = []
    no_data = 0
    for alignment, annotation in pairs:
        precision, counted = evalkit.sentence_precision(alignment, annotation)
        if precision is None:
            no_data += 1
        else:
            baseline.append(precision)
    points = evalkit.precision_threshold_curve(pairs, sorted(taus))
    if csv_out:
        with open(csv_out, "w", encoding="utf-8") as handle:
            handle.write(evalkit.curve_to_csv(points))
    mean_precision = sum(baseline) / len(baseline) if baseline else None
    if as_json:
        payload = {
            "answers": len(pairs),
            "no_data_answers": no_data,
            "mean_precision": mean_precision,
            "curve": [p.to_dict() for p in points],
        }
        _emit(json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2), out)
        return
    lines = [
        f"answers: {len(pairs)} (no-data: {no_data})",
        "mean sentence precision: "
        + ("n/a" if mean_precision is None else f"{mean_precision:.4f}"),
        "threshold  precision  coverage",
    ]
    for point in points:
        precision = "n/a" if point.precision is None else f"{point.precision:.4f}"
        lines.append(f"{point.threshold:<9g}  {precision:>9}  {point.coverage:.4f}")
    _emit("\n".join(lines), out)


@cli.command(name="eval-judge")
@click.option("--judgments", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--metrics", default=None, help="Comma-separated metric names (default: all observed).")
@click.option("--pair", default=None, help="Two model names, comma-separated, for win/tie/lose.")
@json_option
@out_option
def eval_judge_cmd(
    judgments: str, metrics: str | None, pair: str | None, as_json: bool, out: str | None
) -> None:
    """Aggregate judge outputs: averages, histograms, rankings, win/tie/lose."""
    records = evalkit.load_judge_records(judgments)
    single = [r for r in records if r.kind == "single_score"]
    ranked = [r for r in records if r.kind == "pairwise_rank"]
    metric_list = [m.strip() for m in metrics.split(",")] if metrics else None
    payload: dict = {}
    if single:
        aggregates = evalkit.aggregate_judge_scores(single, metric_list)
        payload["scores"] = {
            model: {metric: agg.to_dict() for metric, agg in per_model.items()}
            for model, per_model in aggregates.items()
        }
    if ranked:
        payload["rank_distribution"] = evalkit.rank_distribution(ranked)
    if pair:
        names = [p.strip() for p in pair.split(",")]
        if len(names) != 2:
            raise click.UsageError("--pair needs exactly two comma-separated model names")
        source = single if single else ranked
        pair_metrics = metric_list or (
            sorted({m for r in single for m in (r.scores or {})}) if single else [None]
        )
        payload["win_tie_lose"] = {}
        for metric in pair_metrics:
            wins, ties_, losses = evalkit.win_tie_lose(source, names[0], names[1], metric)
            payload["win_tie_lose"][metric or "rank"] = {
                "wins": wins, "ties": ties_, "losses": losses,
            }
    if as_json:
        _emit(json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2), out)
        return
    lines = []
    if "scores" in payload:
        lines.append("model  metric  average  histogram(1..5)")
        for model in sorted(payload["scores"]):
            for metric, agg in payload["scores"][model].items():
                hist = ",".join(str(c) for c in agg["histogram"])
                lines.append(f"{model}  {metric}  {agg['average']:.2f}  [{hist}]")
    if "rank_distribution" in payload:
        lines.append("model  rank fractions (1st..)")
        for model, fractions in payload["rank_distribution"].items():
            lines.append(f"{model}  " + "  ".join(f"{f:.3f}" for f in fractions))
    if "win_tie_lose" in payload:
        for metric, wtl in payload["win_tie_lose"].items():
            lines.append(
                f"win/tie/lose ({metric}): {wtl['wins']}/{wtl['ties']}/{wtl['losses']}"
            )
    _emit("\n".join(lines), out)


@cli.command(name="export-pairs")
@corpus_option
@click.option("--qa", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--version", type=click.Choice(["ver0", "ver1"]), default="ver1", show_default=True,
              help="Chunk text version used for candidate scoring (output text is always ver1).")
@click.option("--scorer", type=click.Choice(["lexical", "remote"]), default="lexical", show_default=True)
@click.option("--scorer-endpoint", default="")
@click.option("--sep-token", default="[SEP]", show_default=True)
@click.option("--retries", type=int, default=3, show_default=True)
@out_option
def export_pairs_cmd(
    corpus: str, qa: str, seed: int, version: str, scorer: str, scorer_endpoint: str,
    sep_token: str, retries: int, out: str | None,
) -> None:
    """Write ranking-model training pairs (1 positive + 3 sampled negatives)."""
    store = ingest_corpus(corpus)
    pairs = [p for p in ingest_qa(qa, store) if p.split == "train"]
    if not pairs:
        raise DataError(f"{qa}: no train-split QA pairs")
    backend = _build_scorer(scorer, scorer_endpoint, "pairwise", sep_token, retries)
    training = export_training_pairs(pairs, store, backend, seed)
    _emit(training_pairs_to_jsonl(training), out)


@cli.command(name="serve")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--listen", default=None, help="host:port (default 127.0.0.1:8080).")
@click.option("--scorer", type=click.Choice(["lexical", "remote"]), default=None)
@click.option("--generator", type=click.Choice(["extractive", "remote"]), default=None)
@click.option("--n", type=int, default=None)
@click.option("--k", type=int, default=None)
@click.option("--threshold", type=float, default=None)
@click.option("--tie-epsilon", type=float, default=None)
@click.option("--mode", type=_MODE_CHOICES, default=None)
def serve_cmd(
    config_path: str | None, corpus: str | None, listen: str | None, scorer: str | None,
    generator: str | None, n: int | None, k: int | None, threshold: float | None,
    tie_epsilon: float | None, mode: str | None,
) -> None:
    """Start the HTTP service."""
    import uvicorn

    from .service import create_app

    overrides = {
        "corpus": corpus,
        "listen": listen,
        "scorer": scorer,
        "generator": generator,
        "n": n,
        "k": k,
        "threshold": threshold,
        "tie_epsilon": tie_epsilon,
        "mode": _mode_value(mode) if mode else None,
    }
    config = load_config(config_path, overrides=overrides)
    if not config.corpus:
        raise click.UsageError("a corpus path is required (--corpus or config file)")
    host, port = config.host_port()
    uvicorn.run(create_app(config), host=host, port=port)


def main(argv: list[str] | None = None) -> int:
    """CLI entry point with the documented exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return EXIT_USAGE
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except BackendError as exc:
        click.echo(f"backend error: {exc}", err=True)
        return EXIT_BACKEND
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return EXIT_DATA
    except RefragError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA
    except ValueError as exc:
        click.echo(f"usage error: {exc}", err=True)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
