"""Local backend determinism, composition semantics, caching, remote protocol."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from cva.corpus import ColumnMetadata, Corpus, GlossaryEntry
from cva.embedding import (
    GlossaryStrategy,
    HashedTrigramBackend,
    MetadataStrategy,
    RemoteEmbeddingBackend,
    compose_glossary_embedding,
    compose_metadata_embedding,
    embed_corpus,
    fnv1a_64,
)
from cva.errors import BackendUnavailableError
from cva.ranker import cosine

from conftest import make_column, make_entry


@pytest.fixture(scope="module")
def backend() -> HashedTrigramBackend:
    return HashedTrigramBackend()


def column(label: str, table_name: str = "Film") -> ColumnMetadata:
    return ColumnMetadata(
        id="c1", label=label, table_id="t1", table_name=table_name, table_columns=(label,)
    )


def entry(label: str, desc: str) -> GlossaryEntry:
    return GlossaryEntry(id="g1", label=label, desc=desc)


def test_fnv1a_known_values():
    # Reference values for the 64-bit FNV-1a parameters.
    assert fnv1a_64(b"") == 0xCBF29CE484222325
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C


def test_embed_deterministic(backend):
    first = backend.embed("abc")
    second = backend.embed("abc")
    assert np.array_equal(first, second)


def test_embed_empty_is_zero_vector(backend):
    vec = backend.embed("")
    assert vec.shape == (1024,)
    assert not vec.any()


def test_identical_texts_cosine_one(backend):
    a = backend.embed("film director")
    b = backend.embed("film director")
    assert cosine(a, b) == pytest.approx(1.0, abs=1e-12)


def test_nonempty_text_has_unit_norm(backend):
    for text in ("a", "Year", "a much longer piece of text with spaces"):
        assert np.linalg.norm(backend.embed(text)) == pytest.approx(1.0, abs=1e-12)


def test_lowercasing(backend):
    assert np.array_equal(backend.embed("YEAR"), backend.embed("year"))


def test_sum_strategy_is_componentwise_sum(backend):
    col = column("Year", table_name="Film")
    composed = compose_metadata_embedding(MetadataStrategy.LABEL_SUM_TABLE_NAME, col, backend)
    expected = backend.embed("Year") + backend.embed("Film")
    assert np.array_equal(composed, expected)


def test_label_strategy_empty_label_is_zero(backend):
    col = column("")
    composed = compose_metadata_embedding(MetadataStrategy.LABEL, col, backend)
    assert not composed.any()


def test_concat_is_order_sensitive_sum_is_commutative(backend):
    concat_ab_c = compose_metadata_embedding(
        MetadataStrategy.LABEL_CONCAT_TABLE_NAME, column("ab", "c"), backend
    )
    concat_a_bc = compose_metadata_embedding(
        MetadataStrategy.LABEL_CONCAT_TABLE_NAME, column("a", "bc"), backend
    )
    assert not np.array_equal(concat_ab_c, concat_a_bc)

    sum_xy = compose_metadata_embedding(
        MetadataStrategy.LABEL_SUM_TABLE_NAME, column("x", "y"), backend
    )
    sum_yx = compose_metadata_embedding(
        MetadataStrategy.LABEL_SUM_TABLE_NAME, column("y", "x"), backend
    )
    assert np.array_equal(sum_xy, sum_yx)


def test_sum_is_associative_componentwise(backend):
    a, b, c = backend.embed("one"), backend.embed("two"), backend.embed("three")
    assert np.allclose((a + b) + c, a + (b + c))


def test_glossary_desc_strategy(backend):
    g = entry("film director", "A film director is a person who directs the making of a film.")
    composed = compose_glossary_embedding(GlossaryStrategy.DESC, g, backend)
    assert np.array_equal(composed, backend.embed(g.desc))


def test_desc_sum_label_with_empty_desc_equals_label(backend):
    g = entry("age", "")
    composed = compose_glossary_embedding(GlossaryStrategy.DESC_SUM_LABEL, g, backend)
    assert np.array_equal(composed, backend.embed("age"))


def test_label_concat_empty_desc_differs_from_label(backend):
    # Concatenation always inserts the separator, so "age " != "age" under
    # trigram hashing. Documented quirk of the concat strategies.
    g = entry("age", "")
    composed = compose_glossary_embedding(GlossaryStrategy.LABEL_CONCAT_DESC, g, backend)
    assert np.array_equal(composed, backend.embed("age "))
    assert not np.array_equal(composed, backend.embed("age"))


class CountingBackend(HashedTrigramBackend):
    """Counts embed_batch calls so cache behavior is observable."""

    def __init__(self):
        super().__init__()
        self.calls = 0

    def embed_batch(self, texts):
        self.calls += 1
        return super().embed_batch(texts)


def small_corpus() -> Corpus:
    return Corpus(
        columns=tuple(make_column(i) for i in range(4)),
        glossary=tuple(make_entry(i) for i in range(6)),
    )


def test_embed_corpus_shapes(backend):
    corpus = small_corpus()
    meta, gloss = embed_corpus(
        corpus, MetadataStrategy.LABEL, GlossaryStrategy.LABEL, backend
    )
    assert meta.shape == (4, 1024)
    assert gloss.shape == (6, 1024)


def test_embed_corpus_empty(backend):
    corpus = Corpus(columns=(), glossary=())
    meta, gloss = embed_corpus(
        corpus, MetadataStrategy.LABEL, GlossaryStrategy.LABEL, backend
    )
    assert meta.shape == (0, 1024)
    assert gloss.shape == (0, 1024)


def test_warm_cache_issues_zero_backend_calls(tmp_path):
    corpus = small_corpus()
    cold = CountingBackend()
    cold_meta, cold_gloss = embed_corpus(
        corpus, MetadataStrategy.LABEL, GlossaryStrategy.DESC_SUM_LABEL, cold, tmp_path
    )
    assert cold.calls > 0
    warm = CountingBackend()
    warm_meta, warm_gloss = embed_corpus(
        corpus, MetadataStrategy.LABEL, GlossaryStrategy.DESC_SUM_LABEL, warm, tmp_path
    )
    assert warm.calls == 0
    assert np.array_equal(cold_meta, warm_meta)
    assert np.array_equal(cold_gloss, warm_gloss)


def test_cache_round_trip_bit_for_bit(tmp_path, backend):
    corpus = small_corpus()
    fresh_meta, fresh_gloss = embed_corpus(
        corpus, MetadataStrategy.LABEL_SUM_TABLE_NAME, GlossaryStrategy.LABEL, backend
    )
    embed_corpus(
        corpus, MetadataStrategy.LABEL_SUM_TABLE_NAME, GlossaryStrategy.LABEL, backend, tmp_path
    )
    cached_meta, cached_gloss = embed_corpus(
        corpus, MetadataStrategy.LABEL_SUM_TABLE_NAME, GlossaryStrategy.LABEL, backend, tmp_path
    )
    assert np.array_equal(fresh_meta, cached_meta)
    assert np.array_equal(fresh_gloss, cached_gloss)


def test_corrupt_cache_recomputes(tmp_path, caplog):
    corpus = small_corpus()
    backend = CountingBackend()
    embed_corpus(corpus, MetadataStrategy.LABEL, GlossaryStrategy.LABEL, backend, tmp_path)
    for npz in tmp_path.glob("*.npz"):
        npz.write_bytes(b"not a numpy file")
    again = CountingBackend()
    with caplog.at_level("WARNING"):
        meta, gloss = embed_corpus(
            corpus, MetadataStrategy.LABEL, GlossaryStrategy.LABEL, again, tmp_path
        )
    assert again.calls > 0
    assert meta.shape == (4, 1024)
    assert any("recomputing" in message for message in caplog.messages)


def test_partial_cache_only_computes_misses(tmp_path):
    corpus_a = Corpus(
        columns=tuple(make_column(i) for i in range(3)),
        glossary=(make_entry(0),),
    )
    corpus_b = Corpus(
        columns=tuple(make_column(i) for i in range(5)),  # 3 cached + 2 new
        glossary=(make_entry(0),),
    )
    embed_corpus(corpus_a, MetadataStrategy.LABEL, GlossaryStrategy.LABEL,
                 CountingBackend(), tmp_path)
    fresh = embed_corpus(corpus_b, MetadataStrategy.LABEL, GlossaryStrategy.LABEL,
                         HashedTrigramBackend(), None)
    mixed = embed_corpus(corpus_b, MetadataStrategy.LABEL, GlossaryStrategy.LABEL,
                         HashedTrigramBackend(), tmp_path)
    assert np.array_equal(fresh[0], mixed[0])


class _ScriptedEmbedHandler(BaseHTTPRequestHandler):
    """Returns vectors derived from text length; can fail the first N requests."""

    def log_message(self, format, *args):
        pass

    def do_POST(self):
        server = self.server
        length = int(self.headers.get("Content-Length", "0"))
        body = json.loads(self.rfile.read(length).decode("utf-8"))
        server.requests.append(body)
        if server.failures_left > 0:
            server.failures_left -= 1
            self.send_response(429)
            self.end_headers()
            return
        vectors = [[float(len(text)), 1.0, 0.0] for text in body["texts"]]
        payload = json.dumps({"vectors": vectors}).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)


@pytest.fixture
def embed_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _ScriptedEmbedHandler)
    server.daemon_threads = True
    server.requests = []
    server.failures_left = 0
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host, port = server.server_address[:2]
    yield server, f"http://{host}:{port}"
    server.shutdown()
    server.server_close()


def test_remote_backend_protocol(embed_server, monkeypatch):
    server, url = embed_server
    monkeypatch.setenv("CVA_EMBED_API_KEY", "secret-key")
    backend = RemoteEmbeddingBackend(base_url=url, model="demo-encoder")
    vectors = backend.embed_batch(["ab", "abcd"])
    assert vectors.shape == (2, 3)
    assert vectors[0][0] == 2.0 and vectors[1][0] == 4.0
    assert backend.dim == 3
    assert server.requests[-1] == {"model": "demo-encoder", "texts": ["ab", "abcd"]}


def test_remote_backend_retries_on_429(embed_server):
    server, url = embed_server
    server.failures_left = 2
    backend = RemoteEmbeddingBackend(base_url=url, max_retries=3, backoff=0.01)
    vectors = backend.embed_batch(["xyz"])
    assert vectors.shape == (1, 3)
    assert len(server.requests) == 3


def test_remote_backend_gives_up_after_retries(embed_server):
    server, url = embed_server
    server.failures_left = 100
    backend = RemoteEmbeddingBackend(base_url=url, max_retries=1, backoff=0.01)
    with pytest.raises(BackendUnavailableError):
        backend.embed_batch(["xyz"])


def test_remote_backend_requires_url(monkeypatch):
    monkeypatch.delenv("CVA_EMBED_URL", raising=False)
    with pytest.raises(BackendUnavailableError):
        RemoteEmbeddingBackend()
