from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from refrag.cli import EXIT_BACKEND, EXIT_DATA, EXIT_OK, EXIT_USAGE, cli, main

QUESTION = "What was the purpose of the HGC frontal offset test?"

SUBCOMMANDS = [
    "ingest",
    "query",
    "retrieve",
    "rerank",
    "match",
    "eval-retrieval",
    "eval-match",
    "eval-judge",
    "export-pairs",
    "serve",
]


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def paths(fixture_dir):
    return {
        "corpus": str(fixture_dir / "corpus.jsonl"),
        "qa": str(fixture_dir / "qa.jsonl"),
        "run": str(fixture_dir / "run.jsonl"),
        "alignments": str(fixture_dir / "alignments.jsonl"),
        "annotations": str(fixture_dir / "annotations.jsonl"),
        "judge": str(fixture_dir / "judge_scores.jsonl"),
        "malformed": str(fixture_dir / "corpus_malformed.jsonl"),
    }


class TestHelpAndUsage:
    @pytest.mark.parametrize("subcommand", SUBCOMMANDS)
    def test_help_exits_zero_and_documents_flags(self, runner, subcommand):
        result = runner.invoke(cli, [subcommand, "--help"])
        assert result.exit_code == 0
        assert "--help" in result.output
        if subcommand not in ("eval-judge", "eval-match", "eval-retrieval", "serve", "ingest"):
            assert "--corpus" in result.output or subcommand == "serve"

    def test_unknown_flag_is_usage_error(self, paths):
        code = main(["ingest", "--corpus", paths["corpus"], "--frobnicate"])
        assert code == EXIT_USAGE

    def test_unknown_subcommand_is_usage_error(self):
        assert main(["transmogrify"]) == EXIT_USAGE

    def test_top_level_help(self):
        assert main(["--help"]) == EXIT_OK


class TestIngest:
    def test_reports_counts(self, runner, paths):
        result = runner.invoke(
            cli, ["ingest", "--corpus", paths["corpus"], "--qa", paths["qa"]]
        )
        assert result.exit_code == 0
        assert "9 chunks" in result.output
        assert "test_report=3" in result.output
        assert "12 pairs" in result.output
        assert "train=8" in result.output

    def test_json_report(self, runner, paths):
        result = runner.invoke(
            cli, ["ingest", "--corpus", paths["corpus"], "--qa", paths["qa"], "--json"]
        )
        payload = json.loads(result.output)
        assert payload["chunks"]["total"] == 9
        assert payload["qa"]["by_split"] == {"train": 8, "val": 2, "test": 2}

    def test_malformed_corpus_exits_2_with_line(self, paths, capsys):
        code = main(["ingest", "--corpus", paths["malformed"]])
        captured = capsys.readouterr()
        assert code == EXIT_DATA
        assert "line 2" in captured.err

    def test_missing_file_is_usage_error(self):
        assert main(["ingest", "--corpus", "/does/not/exist.jsonl"]) == EXIT_USAGE


class TestRetrieveRerank:
    def test_retrieve_ranks_gold_first_ver1(self, runner, paths):
        result = runner.invoke(
            cli,
            ["retrieve", "--corpus", paths["corpus"], "--question", QUESTION, "--n", "3", "--json"],
        )
        assert result.exit_code == 0
        payload = json.loads(result.output)
        assert payload["entries"][0][0] == "TR-0001"

    def test_rerank_output_subset_of_n(self, runner, paths):
        result = runner.invoke(
            cli,
            ["rerank", "--corpus", paths["corpus"], "--question", QUESTION,
             "--n", "6", "--k", "2", "--json"],
        )
        payload = json.loads(result.output)
        assert len(payload["entries"]) == 2
        assert payload["stage"] == "reranking"

    def test_rerank_k_above_n_usage_error(self, paths):
        code = main(
            ["rerank", "--corpus", paths["corpus"], "--question", QUESTION, "--n", "2", "--k", "5"]
        )
        assert code == EXIT_USAGE

    def test_text_output_lists_ranks(self, runner, paths):
        result = runner.invoke(
            cli, ["retrieve", "--corpus", paths["corpus"], "--question", QUESTION, "--n", "2"]
        )
        assert result.output.startswith("1. ")


class TestQuery:
    def test_byte_identical_across_runs(self, runner, paths):
        args = ["query", "--corpus", paths["corpus"], "--question", QUESTION, "--json"]
        first = runner.invoke(cli, args)
        second = runner.invoke(cli, args)
        assert first.exit_code == 0
        assert first.output == second.output

    def test_segments_subset_of_reranked(self, runner, paths):
        result = runner.invoke(
            cli, ["query", "--corpus", paths["corpus"], "--question", QUESTION, "--json"]
        )
        payload = json.loads(result.output)
        reranked = {cid for cid, _ in payload["reranked"]}
        for segment in payload["alignment"]["segments"]:
            assert set(segment["chunk_ids"]) <= reranked

    def test_text_output_marks_segments(self, runner, paths):
        result = runner.invoke(
            cli, ["query", "--corpus", paths["corpus"], "--question", QUESTION]
        )
        assert result.exit_code == 0
        assert "referenced" in result.output
        assert "reranked:" in result.output

    def test_k_above_n_usage_error(self, paths):
        code = main(
            ["query", "--corpus", paths["corpus"], "--question", QUESTION, "--n", "2", "--k", "5"]
        )
        assert code == EXIT_USAGE

    def test_out_writes_file(self, runner, paths, tmp_path):
        out = tmp_path / "answer.json"
        result = runner.invoke(
            cli,
            ["query", "--corpus", paths["corpus"], "--question", QUESTION, "--json",
             "--out", str(out)],
        )
        assert result.exit_code == 0
        payload = json.loads(out.read_text())
        assert payload["question"] == QUESTION

    def test_remote_scorer_dead_endpoint_exits_3(self, paths):
        code = main(
            ["query", "--corpus", paths["corpus"], "--question", QUESTION,
             "--scorer", "remote", "--scorer-endpoint", "http://127.0.0.1:9/",
             "--retries", "0"]
        )
        assert code == EXIT_BACKEND


class TestMatch:
    def test_threshold_monotonicity_between_invocations(self, runner, paths):
        base = [
            "match", "--corpus", paths["corpus"],
            "--chunk-id", "TR-0001", "--chunk-id", "TB-0002",
            "--sentence", "Closing the beam cross section removed the fracture.",
            "--sentence", "Energy absorbing members fold progressively.",
            "--json",
        ]
        low = json.loads(runner.invoke(cli, base + ["--threshold", "0.1"]).output)
        high = json.loads(runner.invoke(cli, base + ["--threshold", "0.9"]).output)
        ref = lambda payload: {
            i
            for seg in payload["segments"]
            if seg["referenced"]
            for i in range(seg["start"], seg["end"] + 1)
        }
        assert ref(high) <= ref(low)

    def test_sentences_file(self, runner, paths, tmp_path):
        sentences = tmp_path / "sentences.json"
        sentences.write_text(json.dumps(["Roof rail buckling started near the joint."]))
        result = runner.invoke(
            cli,
            ["match", "--corpus", paths["corpus"], "--chunk-id", "TR-0003",
             "--sentences-file", str(sentences), "--json"],
        )
        assert result.exit_code == 0
        payload = json.loads(result.output)
        assert payload["segments"][0]["chunk_ids"] == ["TR-0003"]

    def test_unknown_chunk_id_exits_2(self, paths, capsys):
        code = main(
            ["match", "--corpus", paths["corpus"], "--chunk-id", "NOPE", "--sentence", "A."]
        )
        assert code == EXIT_DATA
        assert "NOPE" in capsys.readouterr().err

    def test_no_sentences_usage_error(self, paths):
        code = main(["match", "--corpus", paths["corpus"], "--chunk-id", "TR-0001"])
        assert code == EXIT_USAGE


class TestEvalRetrieval:
    def test_matches_expected_report(self, runner, paths, fixture_dir):
        result = runner.invoke(
            cli,
            ["eval-retrieval", "--run", paths["run"], "--qa", paths["qa"],
             "--corpus", paths["corpus"], "--ks", "1,5,10", "--json"],
        )
        assert result.exit_code == 0
        payload = json.loads(result.output)
        expected = json.loads((fixture_dir / "expected_retrieval_report.json").read_text())
        for name, value in expected["aggregates"].items():
            assert payload["aggregates"][name] == pytest.approx(value, abs=1e-12)

    def test_text_table(self, runner, paths):
        result = runner.invoke(
            cli, ["eval-retrieval", "--run", paths["run"], "--qa", paths["qa"], "--ks", "5"]
        )
        assert result.exit_code == 0
        assert "map@5" in result.output
        assert "0.5097" in result.output

    def test_bad_ks_usage_error(self, paths):
        code = main(
            ["eval-retrieval", "--run", paths["run"], "--qa", paths["qa"], "--ks", "one"]
        )
        assert code == EXIT_USAGE


class TestEvalMatch:
    def test_curve_and_csv(self, runner, paths, tmp_path, fixture_dir):
        csv_out = tmp_path / "curve.csv"
        result = runner.invoke(
            cli,
            ["eval-match", "--alignments", paths["alignments"],
             "--annotations", paths["annotations"],
             "--thresholds", "0,0.25,0.5,0.75", "--json", "--csv-out", str(csv_out)],
        )
        assert result.exit_code == 0
        payload = json.loads(result.output)
        expected = json.loads((fixture_dir / "expected_curve.json").read_text())
        assert payload["curve"] == expected
        assert payload["mean_precision"] == pytest.approx(0.625)
        lines = csv_out.read_text().splitlines()
        assert lines[0] == "threshold,precision,coverage"
        assert len(lines) == 5

    def test_text_output(self, runner, paths):
        result = runner.invoke(
            cli,
            ["eval-match", "--alignments", paths["alignments"],
             "--annotations", paths["annotations"]],
        )
        assert result.exit_code == 0
        assert "mean sentence precision" in result.output


class TestEvalJudge:
    def test_prints_reference_averages(self, runner, paths):
        result = runner.invoke(cli, ["eval-judge", "--judgments", paths["judge"]])
        assert result.exit_code == 0
        for value in ("2.54", "4.33", "2.89", "4.22", "2.60", "3.68"):
            assert value in result.output

    def test_json_with_pair(self, runner, paths):
        result = runner.invoke(
            cli,
            ["eval-judge", "--judgments", paths["judge"], "--pair", "rag,llm-only", "--json"],
        )
        payload = json.loads(result.output)
        assert payload["scores"]["rag"]["correctness"]["average"] == pytest.approx(4.33)
        wtl = payload["win_tie_lose"]["correctness"]
        assert wtl["wins"] + wtl["ties"] + wtl["losses"] == 100

    def test_bad_pair_usage_error(self, paths):
        code = main(["eval-judge", "--judgments", paths["judge"], "--pair", "only-one"])
        assert code == EXIT_USAGE

    def test_rank_records_distribution(self, runner, tmp_path):
        path = tmp_path / "ranks.jsonl"
        lines = [
            {"qid": "q1", "kind": "pairwise_rank", "ranks": {"a": 1, "b": 2}},
            {"qid": "q2", "kind": "pairwise_rank", "ranks": {"a": 2, "b": 1}},
        ]
        path.write_text("\n".join(json.dumps(l) for l in lines) + "\n")
        result = runner.invoke(cli, ["eval-judge", "--judgments", str(path), "--json"])
        payload = json.loads(result.output)
        assert payload["rank_distribution"]["a"] == [0.5, 0.5]


class TestExportPairs:
    def test_contract_and_determinism(self, runner, paths, tmp_path):
        out1 = tmp_path / "pairs1.jsonl"
        out2 = tmp_path / "pairs2.jsonl"
        for out in (out1, out2):
            result = runner.invoke(
                cli,
                ["export-pairs", "--corpus", paths["corpus"], "--qa", paths["qa"],
                 "--seed", "0", "--out", str(out)],
            )
            assert result.exit_code == 0
        assert out1.read_bytes() == out2.read_bytes()
        records = [json.loads(line) for line in out1.read_text().splitlines()]
        # 8 train qids, 1 gold each -> 8 positives + 24 negatives
        assert len(records) == 32
        assert sum(record["label"] for record in records) == 8

    def test_different_seed_changes_output(self, runner, paths, tmp_path):
        outputs = []
        for seed in ("0", "1"):
            out = tmp_path / f"pairs-{seed}.jsonl"
            runner.invoke(
                cli,
                ["export-pairs", "--corpus", paths["corpus"], "--qa", paths["qa"],
                 "--seed", seed, "--out", str(out)],
            )
            outputs.append(out.read_text())
        assert outputs[0] != outputs[1]


class TestServe:
    def test_requires_corpus(self):
        assert main(["serve"]) == EXIT_USAGE
