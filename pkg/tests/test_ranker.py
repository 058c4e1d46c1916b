"""Cosine, index construction, top-k against a brute-force oracle, rank_corpus."""

from __future__ import annotations

import math

import numpy as np
import pytest

from cva.embedding import GlossaryStrategy, HashedTrigramBackend, MetadataStrategy
from cva.errors import DimMismatchError, DuplicateIdError, EmptyIndexError
from cva.ranker import (
    RankedMapping,
    build_index,
    cosine,
    rank_corpus,
    read_mappings,
    top_k,
    write_mappings,
)

from conftest import self_glossary_corpus


def brute_force_top_k(ids, vectors, query, k):
    """Independent oracle: per-entry cosine from first principles, full sort."""
    scored = []
    for entry_id, vector in zip(ids, vectors):
        dot = sum(float(a) * float(b) for a, b in zip(vector, query))
        norm_v = math.sqrt(sum(float(a) * float(a) for a in vector))
        norm_q = math.sqrt(sum(float(b) * float(b) for b in query))
        score = 0.0 if norm_v == 0.0 or norm_q == 0.0 else dot / (norm_v * norm_q)
        scored.append((entry_id, score))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return [entry_id for entry_id, _ in scored[:k]]


def test_cosine_self_similarity():
    v = np.array([0.3, -1.2, 4.0])
    assert cosine(v, v) == pytest.approx(1.0, abs=1e-12)


def test_cosine_orthogonal_and_scale_invariance():
    assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
    assert cosine(np.array([1.0, 1.0]), np.array([2.0, 2.0])) == pytest.approx(1.0, abs=1e-12)


def test_cosine_zero_vector_defined_as_zero():
    assert cosine(np.zeros(4), np.ones(4)) == 0.0
    assert cosine(np.zeros(4), np.zeros(4)) == 0.0


def test_cosine_dim_mismatch():
    with pytest.raises(DimMismatchError):
        cosine(np.ones(3), np.ones(4))


def test_build_index_validations():
    with pytest.raises(EmptyIndexError):
        build_index([], np.zeros((0, 4)))
    with pytest.raises(DuplicateIdError):
        build_index(["a", "a"], np.ones((2, 4)))
    with pytest.raises(DimMismatchError):
        build_index(["a", "b"], [[1.0, 2.0], [1.0, 2.0, 3.0]])


def test_top_k_exact_match_first():
    vectors = np.eye(4)
    index = build_index(["a", "b", "c", "d"], vectors)
    result = top_k(index, np.array([0.0, 1.0, 0.0, 0.0]), k=2)
    assert result[0] == ("b", pytest.approx(1.0))
    assert result[1][1] == pytest.approx(0.0)


def test_top_k_clamps_k():
    index = build_index(["a", "b", "c"], np.eye(3))
    assert len(top_k(index, np.array([1.0, 0.0, 0.0]), k=10)) == 3


def test_top_k_tie_break_by_ascending_id():
    # Identical vectors tie exactly; order must be lexicographic by id.
    row = np.array([1.0, 1.0, 0.0])
    index = build_index(["zz", "aa", "mm"], np.vstack([row, row, row]))
    result = top_k(index, row, k=3)
    assert [gid for gid, _ in result] == ["aa", "mm", "zz"]


def test_top_k_zero_query_scores_zero_in_id_order():
    index = build_index(["b", "a"], np.eye(2))
    result = top_k(index, np.zeros(2), k=2)
    assert [gid for gid, _ in result] == ["a", "b"]
    assert all(score == 0.0 for _, score in result)


def test_top_k_dim_mismatch():
    index = build_index(["a"], np.ones((1, 3)))
    with pytest.raises(DimMismatchError):
        top_k(index, np.ones(4))


def test_top_k_matches_brute_force_oracle_random():
    rng = np.random.default_rng(7)
    for trial in range(20):
        n = int(rng.integers(2, 60))
        dim = int(rng.integers(2, 16))
        ids = [f"id-{i:03d}" for i in range(n)]
        vectors = rng.normal(size=(n, dim))
        # sprinkle exact ties: duplicated rows and scaled copies
        if n >= 4:
            vectors[1] = vectors[0]
            vectors[3] = 2.0 * vectors[2]
        index = build_index(ids, vectors)
        query = rng.normal(size=dim)
        got = [gid for gid, _ in top_k(index, query, k=5)]
        expected = brute_force_top_k(ids, vectors, query, 5)
        assert got == expected, f"trial {trial}"


def test_top_k_scores_sorted_and_bounded():
    rng = np.random.default_rng(11)
    index = build_index(
        [f"i{i}" for i in range(50)], rng.normal(size=(50, 8))
    )
    result = top_k(index, rng.normal(size=8), k=50)
    scores = [score for _, score in result]
    assert all(scores[i] >= scores[i + 1] for i in range(len(scores) - 1))
    assert all(-1.0 - 1e-9 <= score <= 1.0 + 1e-9 for score in scores)


def test_query_scaling_leaves_ranking_unchanged():
    rng = np.random.default_rng(3)
    index = build_index([f"i{i}" for i in range(30)], rng.normal(size=(30, 12)))
    query = rng.normal(size=12)
    base = [gid for gid, _ in top_k(index, query, k=10)]
    for scale in (0.001, 3.0, 1e6):
        scaled = [gid for gid, _ in top_k(index, scale * query, k=10)]
        assert scaled == base


def test_ranked_mapping_invariants():
    RankedMapping("c", ("a", "b"), (0.9, 0.1))
    with pytest.raises(ValueError):
        RankedMapping("c", ())
    with pytest.raises(ValueError):
        RankedMapping("c", ("a", "a"))
    with pytest.raises(ValueError):
        RankedMapping("c", ("a", "b", "c", "d", "e", "f"))
    with pytest.raises(ValueError):
        RankedMapping("c", ("a", "b"), (0.1, 0.9))


def test_rank_corpus_self_glossary_is_perfect():
    corpus, truth = self_glossary_corpus(40)
    mappings = rank_corpus(
        corpus, MetadataStrategy.LABEL, GlossaryStrategy.LABEL, HashedTrigramBackend()
    )
    assert len(mappings) == 40
    assert all(len(m.glossary_ids) == 5 for m in mappings)
    for mapping in mappings:
        assert mapping.glossary_ids[0] in truth[mapping.column_id]
        assert mapping.scores[0] == pytest.approx(1.0, abs=1e-9)


def test_rank_corpus_empty_metadata():
    corpus, _ = self_glossary_corpus(0)
    assert rank_corpus(
        corpus, MetadataStrategy.LABEL, GlossaryStrategy.LABEL, HashedTrigramBackend()
    ) == []


def test_rank_corpus_k_bounds():
    corpus, _ = self_glossary_corpus(3)
    with pytest.raises(ValueError):
        rank_corpus(
            corpus, MetadataStrategy.LABEL, GlossaryStrategy.LABEL,
            HashedTrigramBackend(), k=6,
        )


def test_rank_corpus_deterministic():
    corpus, _ = self_glossary_corpus(15)
    first = rank_corpus(
        corpus, MetadataStrategy.LABEL_SUM_TABLE_NAME, GlossaryStrategy.DESC_SUM_LABEL,
        HashedTrigramBackend(),
    )
    second = rank_corpus(
        corpus, MetadataStrategy.LABEL_SUM_TABLE_NAME, GlossaryStrategy.DESC_SUM_LABEL,
        HashedTrigramBackend(),
    )
    assert first == second


def test_write_and_read_mappings_round_trip(tmp_path):
    mappings = [
        RankedMapping("c1", ("a", "b"), (0.9, 0.5)),
        RankedMapping("c2", ("b",), (0.7,)),
    ]
    path = tmp_path / "mappings.jsonl"
    scores_path = tmp_path / "mappings.scores.jsonl"
    write_mappings(mappings, path, scores_path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == '{"colID": "c1", "propID": ["a", "b"]}'
    loaded = read_mappings(path)
    assert [m.column_id for m in loaded] == ["c1", "c2"]
    assert loaded[0].glossary_ids == ("a", "b")
    assert scores_path.exists()
