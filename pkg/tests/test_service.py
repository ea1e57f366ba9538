from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from refrag.config import ServiceConfig, load_config
from refrag.errors import DataError
from refrag.service import create_app

QUESTION = "What was the purpose of the HGC frontal offset test?"


@pytest.fixture(scope="module")
def client(fixture_dir):
    config = ServiceConfig(corpus=str(fixture_dir / "corpus.jsonl"))
    app = create_app(config)
    with TestClient(app) as test_client:
        yield test_client


class TestHealth:
    def test_reports_corpus_size_and_backends(self, client):
        response = client.get("/v1/health")
        assert response.status_code == 200
        payload = response.json()
        assert payload["corpus_size"] == 9
        assert payload["scorer"] == {"retrieval": "lexical", "rerank": "lexical"}
        assert payload["generator"] == "extractive"
        assert payload["defaults"]["n"] == 10
        assert payload["defaults"]["k"] == 5
        assert payload["defaults"]["threshold"] == 0.0

    def test_503_before_store_sealed(self, fixture_dir):
        config = ServiceConfig(corpus=str(fixture_dir / "corpus.jsonl"))
        app = create_app(config)
        bare = TestClient(app)  # no lifespan: store not loaded
        response = bare.get("/v1/health")
        assert response.status_code == 503
        assert response.json()["error"]["code"] == "not_ready"


class TestChunks:
    def test_known_chunk_has_both_renderings(self, client):
        response = client.get("/v1/chunks/TR-0001")
        assert response.status_code == 200
        payload = response.json()
        assert payload["ver1"].startswith("## Test Name: HGC frontal offset\n")
        assert payload["ver1"].endswith(payload["ver0"])
        assert payload["header"]["region"] == "EU"

    def test_unknown_chunk_404(self, client):
        response = client.get("/v1/chunks/NOPE")
        assert response.status_code == 404
        assert "NOPE" in response.json()["error"]["message"]

    def test_headerless_chunk_renders_identically(self, client):
        payload = client.get("/v1/chunks/MN-0001").json()
        assert payload["ver0"] == payload["ver1"]


class TestQuery:
    def test_fixture_question_hits_gold_chunk(self, client):
        response = client.post("/v1/query", json={"question": QUESTION})
        assert response.status_code == 200
        payload = response.json()
        reranked_ids = [cid for cid, _ in payload["reranked"]]
        assert "TR-0001" in reranked_ids
        segment_ids = {cid for seg in payload["segments"] for cid in seg["chunk_ids"]}
        assert segment_ids <= set(reranked_ids)
        assert payload["answer_sentences"]
        assert set(payload["chunk_bodies"]) == segment_ids

    def test_segments_tile_the_answer(self, client):
        payload = client.post("/v1/query", json={"question": QUESTION}).json()
        n = len(payload["answer_sentences"])
        segments = payload["segments"]
        assert segments[0]["start"] == 1
        assert segments[-1]["end"] == n
        for prev, cur in zip(segments, segments[1:]):
            assert cur["start"] == prev["end"] + 1

    def test_empty_question_400(self, client):
        response = client.post("/v1/query", json={"question": "   "})
        assert response.status_code == 400
        assert response.json()["error"]["code"] == "empty_question"

    def test_k_above_n_400(self, client):
        response = client.post("/v1/query", json={"question": QUESTION, "k": 10, "n": 5})
        assert response.status_code == 400
        assert response.json()["error"]["code"] == "bad_depths"

    def test_deterministic_for_identical_requests(self, client):
        first = client.post("/v1/query", json={"question": QUESTION}).json()
        second = client.post("/v1/query", json={"question": QUESTION}).json()
        assert json.dumps(first, sort_keys=True) == json.dumps(second, sort_keys=True)

    def test_overrides_respected(self, client):
        payload = client.post(
            "/v1/query", json={"question": QUESTION, "n": 6, "k": 2, "threshold": 0.9}
        ).json()
        assert len(payload["reranked"]) == 2
        assert len(payload["retrieved"]) == 6
        assert payload["alignment"]["threshold"] == 0.9

    def test_bad_mode_400(self, client):
        response = client.post("/v1/query", json={"question": QUESTION, "mode": "greedy"})
        assert response.status_code == 400

    def test_non_json_body_400(self, client):
        response = client.post("/v1/query", content=b"not json")
        assert response.status_code == 400


class TestMatch:
    def test_single_sentence_single_chunk(self, client):
        response = client.post(
            "/v1/match",
            json={"sentences": ["Roof rail buckling started near the middle pillar joint."],
                  "chunk_ids": ["TR-0003"]},
        )
        assert response.status_code == 200
        payload = response.json()
        assert len(payload["segments"]) == 1
        assert payload["segments"][0]["chunk_ids"] == ["TR-0003"]

    def test_unknown_chunk_id_400_citing_id(self, client):
        response = client.post(
            "/v1/match", json={"sentences": ["A sentence."], "chunk_ids": ["NOPE"]}
        )
        assert response.status_code == 400
        assert "NOPE" in response.json()["error"]["message"]

    def test_cell_limit_413(self, fixture_dir):
        config = ServiceConfig(corpus=str(fixture_dir / "corpus.jsonl"), max_match_cells=3)
        app = create_app(config)
        with TestClient(app) as small:
            response = small.post(
                "/v1/match",
                json={"sentences": ["one.", "two."], "chunk_ids": ["TR-0001", "TR-0002"]},
            )
            assert response.status_code == 413

    def test_rematch_with_higher_threshold_same_segmentation(self, client):
        query = client.post("/v1/query", json={"question": QUESTION}).json()
        sentences = query["answer_sentences"]
        chunk_ids = [cid for cid, _ in query["reranked"]]
        low = client.post(
            "/v1/match",
            json={"sentences": sentences, "chunk_ids": chunk_ids, "threshold": 0.0},
        ).json()
        high = client.post(
            "/v1/match",
            json={"sentences": sentences, "chunk_ids": chunk_ids, "threshold": 0.6},
        ).json()
        strip = lambda seg: (seg["start"], seg["end"], seg["chunk_ids"], seg["score"])
        assert [strip(s) for s in low["segments"]] == [strip(s) for s in high["segments"]]
        low_ref = {i for s in low["segments"] if s["referenced"] for i in range(s["start"], s["end"] + 1)}
        high_ref = {i for s in high["segments"] if s["referenced"] for i in range(s["start"], s["end"] + 1)}
        assert high_ref <= low_ref

    def test_idempotent_for_identical_bodies(self, client):
        body = {
            "sentences": ["Roof rail buckling started near the middle pillar joint.", "More text."],
            "chunk_ids": ["TR-0003", "TR-0001"],
            "threshold": 0.2,
        }
        first = client.post("/v1/match", json=body).json()
        second = client.post("/v1/match", json=body).json()
        assert first == second

    def test_inline_chunks(self, client):
        response = client.post(
            "/v1/match",
            json={
                "sentences": ["alpha beta.", "gamma delta."],
                "chunks": [{"id": "x1", "text": "alpha beta"}, {"id": "x2", "text": "gamma delta"}],
            },
        )
        assert response.status_code == 200
        payload = response.json()
        assert {cid for seg in payload["segments"] for cid in seg["chunk_ids"]} == {"x1", "x2"}

    def test_missing_chunks_400(self, client):
        response = client.post("/v1/match", json={"sentences": ["A."]})
        assert response.status_code == 400

    def test_empty_sentences_400(self, client):
        response = client.post("/v1/match", json={"sentences": [], "chunk_ids": ["TR-0001"]})
        assert response.status_code == 400


class TestRemoteBackendFailure:
    def test_dead_scorer_maps_to_502_with_backend_name(self, fixture_dir, stub_server_factory):
        dead = stub_server_factory([(500, {})])
        config = ServiceConfig(
            corpus=str(fixture_dir / "corpus.jsonl"),
            scorer="remote",
            retrieval_endpoint=dead.url,
            rerank_endpoint=dead.url,
            retries=0,
            threshold=0.5,
        )
        app = create_app(config)
        with TestClient(app) as remote_client:
            response = remote_client.post("/v1/query", json={"question": QUESTION})
            assert response.status_code == 502
            message = response.json()["error"]["message"]
            assert "remote-retrieval" in message


class TestConfig:
    def test_defaults_resolve_threshold_by_backend(self):
        lexical = ServiceConfig(corpus="x")
        assert lexical.resolved_threshold == 0.0
        remote = ServiceConfig(
            corpus="x", scorer="remote", retrieval_endpoint="http://r", rerank_endpoint="http://k"
        )
        assert remote.resolved_threshold == 0.5

    def test_explicit_threshold_wins(self):
        config = ServiceConfig(corpus="x", threshold=0.7)
        assert config.resolved_threshold == 0.7

    def test_n_must_cover_k(self):
        with pytest.raises(DataError):
            ServiceConfig(corpus="x", n=3, k=5)

    def test_file_env_and_override_precedence(self, tmp_path):
        path = tmp_path / "svc.conf"
        path.write_text(
            "# service config\nn = 20\nk = 7\nthreshold = 0.25\ncors_origin = http://ui.local\n"
        )
        config = load_config(
            path,
            env={"REFRAG_K": "9"},
            overrides={"threshold": 0.75},
        )
        assert config.n == 20
        assert config.k == 9
        assert config.threshold == 0.75
        assert config.cors_origin == "http://ui.local"

    def test_unknown_config_key_rejected(self, tmp_path):
        path = tmp_path / "svc.conf"
        path.write_text("mystery = 1\n")
        with pytest.raises(DataError):
            load_config(path)

    def test_bad_number_rejected(self, tmp_path):
        path = tmp_path / "svc.conf"
        path.write_text("n = ten\n")
        with pytest.raises(DataError):
            load_config(path)

    def test_listen_parsing(self):
        config = ServiceConfig(corpus="x", listen="0.0.0.0:9100")
        assert config.host_port() == ("0.0.0.0", 9100)
        with pytest.raises(DataError):
            ServiceConfig(corpus="x", listen="nope").host_port()

    def test_cors_header_present_when_configured(self, fixture_dir):
        config = ServiceConfig(
            corpus=str(fixture_dir / "corpus.jsonl"), cors_origin="http://ui.local"
        )
        app = create_app(config)
        with TestClient(app) as cors_client:
            response = cors_client.get("/v1/health", headers={"Origin": "http://ui.local"})
            assert response.headers.get("access-control-allow-origin") == "http://ui.local"

    def test_request_log_appends(self, fixture_dir, tmp_path):
        log_path = tmp_path / "requests.log"
        config = ServiceConfig(
            corpus=str(fixture_dir / "corpus.jsonl"), request_log=str(log_path)
        )
        app = create_app(config)
        with TestClient(app) as logging_client:
            logging_client.post("/v1/query", json={"question": QUESTION})
            logging_client.post(
                "/v1/match",
                json={"sentences": ["A sentence."], "chunk_ids": ["TR-0001"]},
            )
        lines = [json.loads(line) for line in log_path.read_text().splitlines()]
        assert [entry["kind"] for entry in lines] == ["query", "match"]
