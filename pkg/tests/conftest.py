from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from refrag.corpus import Chunk, ChunkStore, ingest_corpus, ingest_qa
from refrag.pipeline import GeneratedAnswer, RankedList
from refrag.scoring import Scorer

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def store() -> ChunkStore:
    return ingest_corpus(FIXTURES / "corpus.jsonl")


@pytest.fixture(scope="session")
def qa_pairs(store):
    return ingest_qa(FIXTURES / "qa.jsonl", store)


class DictScorer(Scorer):
    """Scorer backed by an explicit (query, doc) -> score table."""

    identity = "table"

    def __init__(self, table: dict[tuple[str, str], float], default: float | None = None):
        self.table = table
        self.default = default

    def score(self, query_text: str, doc_text: str) -> float:
        if self.default is not None:
            return self.table.get((query_text, doc_text), self.default)
        return self.table[(query_text, doc_text)]


class CountingScorer(Scorer):
    """Wraps a scorer and counts individual pair scorings."""

    def __init__(self, inner: Scorer):
        self.inner = inner
        self.identity = inner.identity
        self.calls = 0

    def score(self, query_text: str, doc_text: str) -> float:
        self.calls += 1
        return self.inner.score(query_text, doc_text)

    def score_batch(self, pairs):
        self.calls += len(pairs)
        return self.inner.score_batch(pairs)


@pytest.fixture
def dict_scorer_factory():
    return DictScorer


@pytest.fixture
def counting_scorer_factory():
    return CountingScorer


def make_store(bodies: dict[str, str]) -> ChunkStore:
    """Header-less single-source store from id -> body text."""
    return ChunkStore(
        Chunk(id=cid, source="textbook", header=None, body=body, split="train")
        for cid, body in bodies.items()
    )


def make_answer(sentences: list[str], qid: str = "q") -> GeneratedAnswer:
    return GeneratedAnswer(qid=qid, sentences=tuple(sentences), generator="test")


def make_ranked(ids: list[str], qid: str = "q", stage: str = "reranking") -> RankedList:
    return RankedList(qid=qid, stage=stage, entries=tuple((cid, 0.0) for cid in ids))


def check_partition(alignment, n: int) -> None:
    """Assert segments are disjoint, ordered, and cover 1..n exactly."""
    segments = alignment.segments
    assert segments[0].start == 1
    assert segments[-1].end == n
    for prev, cur in zip(segments, segments[1:]):
        assert cur.start == prev.end + 1
    covered = [i for seg in segments for i in seg.sentence_indices()]
    assert covered == list(range(1, n + 1))


SCORE_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


def random_match_instance(rng, n: int, k: int, discrete: bool):
    """Random (answer, ranked, store, scorer) matching scenario.

    Discrete instances draw scores from a small grid to force ties;
    continuous ones draw from [0, 1).
    """
    sentences = [f"s{i}" for i in range(1, n + 1)]
    bodies = {f"c{t}": f"chunk {t} body" for t in range(k)}
    store = make_store(bodies)
    table = {}
    for i in range(1, n + 1):
        for j in range(i, n + 1):
            segment = " ".join(sentences[i - 1 : j])
            for cid, body in bodies.items():
                table[(segment, body)] = rng.choice(SCORE_GRID) if discrete else rng.random()
    answer = make_answer(sentences)
    ranked = make_ranked(list(bodies))
    return answer, ranked, store, DictScorer(table)


class _StubHandler(BaseHTTPRequestHandler):
    server_version = "stub"

    def do_POST(self):  # noqa: N802 (http.server API)
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        request = json.loads(raw) if raw else {}
        self.server.requests.append(request)
        script = self.server.script
        step = script[min(len(self.server.requests) - 1, len(script) - 1)]
        action = step(request) if callable(step) else step
        status, payload = action
        body = payload if isinstance(payload, (bytes, bytearray)) else json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):  # silence test output
        pass


class StubServer:
    """Scripted HTTP endpoint: one (status, payload) step per request."""

    def __init__(self, script):
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
        self.server.script = script
        self.server.requests = []
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}/"

    @property
    def requests(self):
        return self.server.requests

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub_server_factory():
    servers = []

    def factory(script):
        server = StubServer(script)
        servers.append(server)
        return server

    yield factory
    for server in servers:
        server.close()
