"""Exact cosine top-k retrieval of glossary entries for column vectors.

Glossaries here are at most a few thousand entries, so retrieval is a full
scan over a dense matrix: exact, simple, and easy to check against a
brute-force oracle. Ties are broken by ascending glossary id so rankings
are identical across runs and platforms.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus
from .embedding import (
    EmbeddingBackend,
    GlossaryStrategy,
    MetadataStrategy,
    embed_corpus,
)
from .errors import DimMismatchError, DuplicateIdError, EmptyIndexError

logger = logging.getLogger(__name__)

MAX_RANKED = 5


@dataclass(frozen=True)
class RankedMapping:
    """An ordered shortlist (most relevant first) of glossary ids for one column.

    `scores` is present for similarity-based rankings and None for rankings
    parsed out of model responses, where only the order is known.
    """

    column_id: str
    glossary_ids: tuple[str, ...]
    scores: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.glossary_ids:
            raise ValueError(f"mapping for {self.column_id!r} has no glossary ids")
        if len(self.glossary_ids) > MAX_RANKED:
            raise ValueError(
                f"mapping for {self.column_id!r} has {len(self.glossary_ids)} ids; "
                f"at most {MAX_RANKED} are allowed"
            )
        if len(set(self.glossary_ids)) != len(self.glossary_ids):
            raise ValueError(f"mapping for {self.column_id!r} repeats a glossary id")
        if self.scores is not None:
            if len(self.scores) != len(self.glossary_ids):
                raise ValueError("scores and glossary_ids must have equal length")
            if any(a < b for a, b in zip(self.scores, self.scores[1:])):
                raise ValueError("scores must be non-increasing")


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; defined as 0.0 if either vector is all-zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatchError(f"vector dims differ: {a.shape} vs {b.shape}")
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return float(np.dot(a, b) / (norm_a * norm_b))


@dataclass(frozen=True)
class SimilarityIndex:
    """Immutable dense index: ids, raw vectors, and unit-normalized rows."""

    ids: tuple[str, ...]
    vectors: np.ndarray
    unit_vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.ids)


def build_index(ids, vectors) -> SimilarityIndex:
    """Validate and freeze a glossary-side vector set into a SimilarityIndex."""
    ids = tuple(ids)
    if not ids:
        raise EmptyIndexError("cannot build an index over zero entries")
    if len(set(ids)) != len(ids):
        raise DuplicateIdError("index ids must be unique")
    try:
        matrix = np.asarray(vectors, dtype=np.float64)
    except ValueError as exc:
        raise DimMismatchError(f"entry vectors do not share one dimension: {exc}") from exc
    if matrix.ndim != 2:
        raise DimMismatchError("entry vectors do not share one dimension")
    if matrix.shape[0] != len(ids):
        raise ValueError(f"{len(ids)} ids but {matrix.shape[0]} vectors")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("entry vectors contain non-finite values")
    norms = np.linalg.norm(matrix, axis=1)
    unit = np.zeros_like(matrix)
    nonzero = norms > 0.0
    unit[nonzero] = matrix[nonzero] / norms[nonzero, None]
    matrix.setflags(write=False)
    unit.setflags(write=False)
    return SimilarityIndex(ids=ids, vectors=matrix, unit_vectors=unit)


def top_k(index: SimilarityIndex, query: np.ndarray, k: int = 5) -> list[tuple[str, float]]:
    """The k entries with highest cosine to the query, descending.

    Ties resolve by ascending glossary id. A k larger than the index simply
    returns every entry. An all-zero query scores 0 against everything.
    """
    if k < 1:
        raise ValueError("k must be positive")
    query = np.asarray(query, dtype=np.float64)
    if query.ndim != 1 or query.shape[0] != index.dim:
        raise DimMismatchError(
            f"query dim {query.shape} does not match index dim {index.dim}"
        )
    norm = np.linalg.norm(query)
    if norm == 0.0:
        scores = np.zeros(len(index), dtype=np.float64)
    else:
        scores = index.unit_vectors @ (query / norm)
    id_array = np.asarray(index.ids)
    order = np.lexsort((id_array, -scores))[: min(k, len(index))]
    return [(index.ids[i], float(scores[i])) for i in order]


def rank_corpus(
    corpus: Corpus,
    metadata_strategy: MetadataStrategy,
    glossary_strategy: GlossaryStrategy,
    backend: EmbeddingBackend,
    k: int = 5,
    cache_dir: str | Path | None = None,
) -> list[RankedMapping]:
    """Rank the whole glossary for every column; one mapping per column, corpus order."""
    if not 1 <= k <= MAX_RANKED:
        raise ValueError(f"k must be between 1 and {MAX_RANKED}")
    meta_vectors, gloss_vectors = embed_corpus(
        corpus, metadata_strategy, glossary_strategy, backend, cache_dir
    )
    if not corpus.columns:
        return []
    index = build_index([g.id for g in corpus.glossary], gloss_vectors)
    mappings = []
    for column, vector in zip(corpus.columns, meta_vectors):
        ranked = top_k(index, vector, k)
        mappings.append(
            RankedMapping(
                column_id=column.id,
                glossary_ids=tuple(gid for gid, _ in ranked),
                scores=tuple(score for _, score in ranked),
            )
        )
    return mappings


def write_mappings(
    mappings: list[RankedMapping],
    path: str | Path,
    scores_path: str | Path | None = None,
) -> None:
    """Write mappings as JSONL ({"colID", "propID"}), with scores in a sidecar file."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        for mapping in mappings:
            record = {"colID": mapping.column_id, "propID": list(mapping.glossary_ids)}
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
    if scores_path is not None:
        with open(scores_path, "w", encoding="utf-8") as handle:
            for mapping in mappings:
                record = {
                    "colID": mapping.column_id,
                    "scores": list(mapping.scores) if mapping.scores else None,
                }
                handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_mappings(path: str | Path) -> list[RankedMapping]:
    """Read a mappings JSONL file written by write_mappings (or hand-built)."""
    path = Path(path)
    mappings = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            obj = json.loads(raw)
            mappings.append(
                RankedMapping(
                    column_id=obj["colID"], glossary_ids=tuple(obj["propID"])
                )
            )
    return mappings
