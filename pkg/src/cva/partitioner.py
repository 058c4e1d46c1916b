"""Split a large glossary into topic shards and route columns to them.

Shards are built by k-means over glossary embeddings (label + description,
concatenated before encoding). The clustering is written out here rather
than delegated to a library so its behavior is pinned: seeded k-means++
initialization, at most 100 Lloyd iterations, and empty clusters repaired
by splitting the largest cluster. Same glossary, shard count, seed, and
backend always produce the same plan.

Column-to-shard routing sends each column to the shard whose centroid is
most cosine-similar to the column's label+table-name sum embedding. The
routing rule is a heuristic (nothing ties a column to a shard a priori)
and the exported manifest flags it as such.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import ColumnMetadata, GlossaryEntry
from .embedding import (
    EmbeddingBackend,
    GlossaryStrategy,
    MetadataStrategy,
    compose_batch,
    glossary_strategy_texts,
    metadata_strategy_texts,
)
from .errors import TooManyShardsError

logger = logging.getLogger(__name__)

KMEANS_MAX_ITER = 100
SHARD_GLOSSARY_STRATEGY = GlossaryStrategy.LABEL_CONCAT_DESC
ROUTE_METADATA_STRATEGY = MetadataStrategy.LABEL_SUM_TABLE_NAME


@dataclass
class ShardPlan:
    """A partition of the glossary plus (optionally) a column routing."""

    n_shards: int
    membership: dict[str, int]
    centroids: np.ndarray
    routing: dict[str, int] = field(default_factory=dict)
    glossary: tuple[GlossaryEntry, ...] = ()
    columns: tuple[ColumnMetadata, ...] = ()
    seed: int = 0
    backend_name: str = ""

    def shard_members(self, shard: int) -> list[GlossaryEntry]:
        return [g for g in self.glossary if self.membership[g.id] == shard]

    def shard_sizes(self) -> list[int]:
        sizes = [0] * self.n_shards
        for shard in self.membership.values():
            sizes[shard] += 1
        return sizes


def _kmeans_pp_init(vectors: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = vectors.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((vectors - vectors[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0.0:
            next_idx = int(rng.choice(n, p=d2 / total))
        else:
            # All remaining points coincide with a centroid; pick any unchosen one.
            unchosen = np.setdiff1d(np.arange(n), np.asarray(chosen))
            next_idx = int(rng.choice(unchosen))
        chosen.append(next_idx)
        d2 = np.minimum(d2, ((vectors - vectors[next_idx]) ** 2).sum(axis=1))
    return vectors[chosen].copy()


def _squared_distances(vectors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    cross = vectors @ centroids.T
    v2 = (vectors**2).sum(axis=1)[:, None]
    c2 = (centroids**2).sum(axis=1)[None, :]
    return np.maximum(v2 - 2.0 * cross + c2, 0.0)


def _repair_empty_clusters(labels: np.ndarray, d2: np.ndarray, k: int) -> np.ndarray:
    """Give every empty cluster the farthest member of the currently largest one."""
    labels = labels.copy()
    sizes = np.bincount(labels, minlength=k)
    for empty in np.flatnonzero(sizes == 0):
        largest = int(sizes.argmax())
        members = np.flatnonzero(labels == largest)
        farthest = members[int(d2[members, largest].argmax())]
        labels[farthest] = empty
        sizes[largest] -= 1
        sizes[empty] += 1
    return labels


def kmeans(
    vectors: np.ndarray, k: int, seed: int, max_iter: int = KMEANS_MAX_ITER
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded k-means; returns (labels, centroids) with no cluster empty."""
    vectors = np.asarray(vectors, dtype=np.float64)
    n = vectors.shape[0]
    if k > n:
        raise TooManyShardsError(f"{k} clusters requested for {n} points")
    if k < 1:
        raise ValueError("k must be positive")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(vectors, k, rng)
    labels = np.full(n, -1)
    for iteration in range(max_iter):
        d2 = _squared_distances(vectors, centroids)
        new_labels = _repair_empty_clusters(d2.argmin(axis=1), d2, k)
        if (new_labels == labels).all():
            break
        labels = new_labels
        for cluster in range(k):
            centroids[cluster] = vectors[labels == cluster].mean(axis=0)
    return labels, centroids


def partition_glossary(
    glossary: Sequence[GlossaryEntry],
    n_shards: int,
    backend: EmbeddingBackend,
    seed: int = 0,
) -> ShardPlan:
    """Cluster the glossary into n_shards non-empty topic shards."""
    glossary = tuple(glossary)
    if n_shards < 1:
        raise ValueError("n_shards must be positive")
    if n_shards > len(glossary):
        raise TooManyShardsError(
            f"{n_shards} shards requested for {len(glossary)} glossary entries"
        )
    texts = [glossary_strategy_texts(SHARD_GLOSSARY_STRATEGY, g) for g in glossary]
    vectors = compose_batch(texts, backend)
    labels, centroids = kmeans(vectors, n_shards, seed)
    membership = {entry.id: int(label) for entry, label in zip(glossary, labels)}
    sizes = np.bincount(labels, minlength=n_shards)
    logger.info(
        "partitioned %d entries into %d shards (min %d, mean %.1f, max %d)",
        len(glossary),
        n_shards,
        sizes.min(),
        sizes.mean(),
        sizes.max(),
    )
    return ShardPlan(
        n_shards=n_shards,
        membership=membership,
        centroids=centroids,
        glossary=glossary,
        seed=seed,
        backend_name=backend.name,
    )


def route_metadata(
    columns: Sequence[ColumnMetadata],
    plan: ShardPlan,
    backend: EmbeddingBackend,
) -> dict[str, int]:
    """Assign each column to the shard with the most cosine-similar centroid.

    Ties go to the lowest shard index; a column whose embedding is all-zero
    scores 0 against every centroid and therefore lands in shard 0. The
    routing is stored on the plan and returned.
    """
    columns = tuple(columns)
    if not columns:
        plan.columns = ()
        plan.routing = {}
        return {}
    texts = [metadata_strategy_texts(ROUTE_METADATA_STRATEGY, c) for c in columns]
    vectors = compose_batch(texts, backend)
    norms = np.linalg.norm(vectors, axis=1)
    unit = np.zeros_like(vectors)
    nonzero = norms > 0.0
    unit[nonzero] = vectors[nonzero] / norms[nonzero, None]
    c_norms = np.linalg.norm(plan.centroids, axis=1)
    c_unit = np.zeros_like(plan.centroids)
    c_nonzero = c_norms > 0.0
    c_unit[c_nonzero] = plan.centroids[c_nonzero] / c_norms[c_nonzero, None]
    similarity = unit @ c_unit.T
    assignment = similarity.argmax(axis=1)
    routing = {column.id: int(shard) for column, shard in zip(columns, assignment)}
    plan.columns = columns
    plan.routing = routing
    return routing


def export_shards(plan: ShardPlan, out_dir: str | Path) -> dict:
    """Write per-shard glossary and metadata JSONL files plus a manifest.

    The union of the shard files reconstructs the originals exactly: every
    entry appears in exactly one glossary shard, every routed column in
    exactly one metadata shard. Metadata shard files exist even when empty
    so the file layout is uniform.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    glossary_files = []
    metadata_files = []
    for shard in range(plan.n_shards):
        g_name = f"glossary_shard_{shard:03d}.jsonl"
        with open(out_dir / g_name, "w", encoding="utf-8") as handle:
            count = 0
            for entry in plan.glossary:
                if plan.membership[entry.id] == shard:
                    handle.write(entry.to_json_line() + "\n")
                    count += 1
        glossary_files.append({"file": g_name, "entries": count})
        m_name = f"metadata_shard_{shard:03d}.jsonl"
        with open(out_dir / m_name, "w", encoding="utf-8") as handle:
            count = 0
            for column in plan.columns:
                if plan.routing.get(column.id) == shard:
                    handle.write(column.to_json_line() + "\n")
                    count += 1
        metadata_files.append({"file": m_name, "columns": count})
    manifest = {
        "n_shards": plan.n_shards,
        "seed": plan.seed,
        "backend": plan.backend_name,
        "glossary_entries": len(plan.glossary),
        "metadata_columns": len(plan.columns),
        "glossary_files": glossary_files,
        "metadata_files": metadata_files,
        "routing_rule": (
            "heuristic: column goes to the shard whose centroid has the highest "
            "cosine similarity to the column's label+table-name sum embedding"
        ),
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, ensure_ascii=False, indent=2)
    return manifest
