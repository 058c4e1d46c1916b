"""Text embedding backends and the composition strategies built on them.

Two backends ship with the toolkit:

* HashedTrigramBackend: a deterministic local embedder. Text is lowercased,
  wrapped in boundary markers, split into character trigrams, and each
  trigram is FNV-1a-hashed into one of `dim` buckets; the count vector is
  L2-normalized. It is not a neural sentence encoder; it exists so
  pipelines, oracles, and tests run offline with bit-reproducible vectors.
* RemoteEmbeddingBackend: client for an HTTP embedding service speaking
  POST {base_url}/embed with {"model": ..., "texts": [...]} and returning
  {"vectors": [[...], ...]}. Any real sentence encoder can sit behind it.

A composition strategy builds one vector per record from its text fields,
either by concatenating the texts before encoding or by encoding each field
separately and summing the vectors componentwise. Summed vectors are left
unnormalized; cosine scoring downstream is scale-invariant.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
import requests

from .corpus import ColumnMetadata, Corpus, GlossaryEntry
from .errors import BackendUnavailableError, CacheCorruptError

logger = logging.getLogger(__name__)

LOCAL_BACKEND_DIM = 1024
CONCAT_SEPARATOR = " "

EMBED_URL_ENV = "CVA_EMBED_URL"
EMBED_API_KEY_ENV = "CVA_EMBED_API_KEY"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_FNV_MASK = 0xFFFFFFFFFFFFFFFF
# Control characters so real text never collides with the padding.
_BOUNDARY_START = "\x02"
_BOUNDARY_END = "\x03"


class MetadataStrategy(Enum):
    """How a column's text fields become one query vector."""

    LABEL = "label"
    LABEL_CONCAT_TABLE_NAME = "label-concat-table"
    LABEL_SUM_TABLE_NAME = "label-sum-table"


class GlossaryStrategy(Enum):
    """How a glossary entry's text fields become one candidate vector."""

    LABEL = "label"
    LABEL_CONCAT_DESC = "label-concat-desc"
    DESC = "desc"
    DESC_SUM_LABEL = "desc-sum-label"


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a hash; pure integer arithmetic, identical on every platform."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _FNV_MASK
    return h


class EmbeddingBackend:
    """Interface both backends implement.

    `embed_batch` returns a float64 array of shape (len(texts), dim); `dim`
    is constant for the lifetime of one backend instance.
    """

    name: str = "backend"

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        raise NotImplementedError

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]


class HashedTrigramBackend(EmbeddingBackend):
    """Deterministic hashed character-trigram embedder.

    Same text always yields the identical vector. Non-empty text embeds to a
    unit vector; empty text embeds to the all-zero vector.
    """

    def __init__(self, dim: int = LOCAL_BACKEND_DIM):
        if dim < 1:
            raise ValueError("dim must be positive")
        self._dim = dim
        self.name = f"hashed-trigram-{dim}"
        self._bucket_cache: dict[str, int] = {}

    @property
    def dim(self) -> int:
        return self._dim

    def _bucket(self, trigram: str) -> int:
        bucket = self._bucket_cache.get(trigram)
        if bucket is None:
            bucket = fnv1a_64(trigram.encode("utf-8")) % self._dim
            self._bucket_cache[trigram] = bucket
        return bucket

    def _embed_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self._dim, dtype=np.float64)
        if not text:
            return vec
        padded = _BOUNDARY_START + text.lower() + _BOUNDARY_END
        for i in range(len(padded) - 2):
            vec[self._bucket(padded[i : i + 3])] += 1.0
        norm = np.linalg.norm(vec)
        if norm > 0.0:
            vec /= norm
        return vec

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), self._dim), dtype=np.float64)
        for i, text in enumerate(texts):
            out[i] = self._embed_one(text)
        return out


class RemoteEmbeddingBackend(EmbeddingBackend):
    """Client for a batch embedding HTTP service.

    Retries transient failures (429, 5xx, transport errors) with exponential
    backoff; raises BackendUnavailableError once retries are exhausted. Large
    inputs are chunked, and at most `max_in_flight` chunk requests run
    concurrently.
    """

    def __init__(
        self,
        base_url: str | None = None,
        model: str = "default",
        api_key: str | None = None,
        batch_size: int = 64,
        timeout: float = 30.0,
        max_retries: int = 3,
        backoff: float = 0.5,
        max_in_flight: int = 4,
    ):
        base_url = base_url or os.environ.get(EMBED_URL_ENV)
        if not base_url:
            raise BackendUnavailableError(
                f"no embedding service URL; pass base_url or set {EMBED_URL_ENV}"
            )
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(EMBED_API_KEY_ENV)
        self.batch_size = batch_size
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self.max_in_flight = max(1, max_in_flight)
        self.name = f"remote-{model}"
        self._dim: int | None = None

    @property
    def dim(self) -> int:
        if self._dim is None:
            # Dimension is discovered from the service's first response.
            self._dim = self._post(["dimension probe"]).shape[1]
        return self._dim

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def _post(self, texts: Sequence[str]) -> np.ndarray:
        url = f"{self.base_url}/embed"
        body = {"model": self.model, "texts": list(texts)}
        last_error = ""
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                response = requests.post(
                    url, json=body, headers=self._headers(), timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = f"transport error: {exc}"
                continue
            if response.status_code == 429 or response.status_code >= 500:
                last_error = f"http {response.status_code}"
                continue
            if response.status_code != 200:
                raise BackendUnavailableError(
                    f"embedding service returned http {response.status_code}"
                )
            try:
                vectors = response.json()["vectors"]
                array = np.asarray(vectors, dtype=np.float64)
            except (ValueError, KeyError, TypeError) as exc:
                raise BackendUnavailableError(
                    f"embedding service returned an invalid body: {exc}"
                ) from exc
            if array.ndim != 2 or array.shape[0] != len(texts):
                raise BackendUnavailableError(
                    "embedding service returned a wrong-shaped vector set"
                )
            if not np.all(np.isfinite(array)):
                raise BackendUnavailableError("embedding service returned non-finite values")
            return array
        raise BackendUnavailableError(
            f"embedding service unreachable after {self.max_retries + 1} attempts ({last_error})"
        )

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float64)
        chunks = [texts[i : i + self.batch_size] for i in range(0, len(texts), self.batch_size)]
        if len(chunks) == 1:
            result = self._post(chunks[0])
        else:
            with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
                parts = list(pool.map(self._post, chunks))
            result = np.vstack(parts)
        if self._dim is None:
            self._dim = result.shape[1]
        elif result.shape[1] != self._dim:
            raise BackendUnavailableError(
                f"embedding service changed dimension from {self._dim} to {result.shape[1]}"
            )
        return result


def metadata_strategy_texts(strategy: MetadataStrategy, m: ColumnMetadata) -> list[str]:
    """The texts a metadata strategy feeds to the backend, in encode order."""
    if strategy is MetadataStrategy.LABEL:
        return [m.label]
    if strategy is MetadataStrategy.LABEL_CONCAT_TABLE_NAME:
        return [m.label + CONCAT_SEPARATOR + m.table_name]
    return [m.label, m.table_name]


def glossary_strategy_texts(strategy: GlossaryStrategy, g: GlossaryEntry) -> list[str]:
    """The texts a glossary strategy feeds to the backend, in encode order."""
    if strategy is GlossaryStrategy.LABEL:
        return [g.label]
    if strategy is GlossaryStrategy.LABEL_CONCAT_DESC:
        return [g.label + CONCAT_SEPARATOR + g.desc]
    if strategy is GlossaryStrategy.DESC:
        return [g.desc]
    return [g.desc, g.label]


def _compose(texts: list[str], backend: EmbeddingBackend) -> np.ndarray:
    vectors = backend.embed_batch(texts)
    return vectors[0] if len(texts) == 1 else vectors.sum(axis=0)


def compose_metadata_embedding(
    strategy: MetadataStrategy, m: ColumnMetadata, backend: EmbeddingBackend
) -> np.ndarray:
    """One vector for a column under the given strategy."""
    return _compose(metadata_strategy_texts(strategy, m), backend)


def compose_glossary_embedding(
    strategy: GlossaryStrategy, g: GlossaryEntry, backend: EmbeddingBackend
) -> np.ndarray:
    """One vector for a glossary entry under the given strategy."""
    return _compose(glossary_strategy_texts(strategy, g), backend)


def compose_batch(
    texts_per_record: list[list[str]], backend: EmbeddingBackend
) -> np.ndarray:
    """Compose many records with as few backend calls as possible."""
    if not texts_per_record:
        return np.zeros((0, backend.dim), dtype=np.float64)
    n_parts = len(texts_per_record[0])
    if n_parts == 1:
        return backend.embed_batch([texts[0] for texts in texts_per_record])
    total = np.zeros((len(texts_per_record), backend.dim), dtype=np.float64)
    for part in range(n_parts):
        total += backend.embed_batch([texts[part] for texts in texts_per_record])
    return total


def _content_hash(texts: list[str]) -> str:
    joined = "\x1f".join(texts)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()


class _VectorCache:
    """On-disk vector store for one (backend, strategy) pair.

    Vectors live in a .npz next to a JSON manifest recording the backend
    name, dimension, and the content hash of every stored record. Any
    inconsistency is treated as corruption and the cache is rebuilt.
    """

    def __init__(self, cache_dir: Path, backend_name: str, tag: str):
        safe = backend_name.replace("/", "_")
        self.vectors_path = cache_dir / f"{safe}__{tag}.npz"
        self.manifest_path = cache_dir / f"{safe}__{tag}.manifest.json"
        self.backend_name = backend_name

    def load(self) -> dict[str, np.ndarray]:
        if not self.vectors_path.exists() or not self.manifest_path.exists():
            return {}
        try:
            with open(self.manifest_path, "r", encoding="utf-8") as handle:
                manifest = json.load(handle)
            if manifest.get("backend") != self.backend_name:
                raise CacheCorruptError("cache written by a different backend")
            hashes = manifest["content_hashes"]
            with np.load(self.vectors_path) as data:
                vectors = data["vectors"]
            if vectors.shape[0] != len(hashes) or vectors.shape[1] != manifest["dim"]:
                raise CacheCorruptError("cache manifest does not match vector file")
        except Exception as exc:  # any inconsistency: fall back to recompute
            logger.warning(
                "embedding cache %s unusable (%s); recomputing", self.vectors_path.name, exc
            )
            return {}
        return {h: vectors[i] for i, h in enumerate(hashes)}

    def save(self, entries: dict[str, np.ndarray], dim: int) -> None:
        self.vectors_path.parent.mkdir(parents=True, exist_ok=True)
        hashes = list(entries.keys())
        matrix = (
            np.vstack([entries[h] for h in hashes])
            if hashes
            else np.zeros((0, dim), dtype=np.float64)
        )
        np.savez(self.vectors_path, vectors=matrix)
        manifest = {"backend": self.backend_name, "dim": dim, "content_hashes": hashes}
        with open(self.manifest_path, "w", encoding="utf-8") as handle:
            json.dump(manifest, handle)


def _embed_side(
    texts_per_record: list[list[str]],
    backend: EmbeddingBackend,
    cache: _VectorCache | None,
) -> np.ndarray:
    if cache is None:
        return compose_batch(texts_per_record, backend)
    stored = cache.load()
    hashes = [_content_hash(texts) for texts in texts_per_record]
    missing_idx = [i for i, h in enumerate(hashes) if h not in stored]
    if missing_idx:
        computed = compose_batch([texts_per_record[i] for i in missing_idx], backend)
        for row, i in enumerate(missing_idx):
            stored[hashes[i]] = computed[row]
        cache.save(stored, backend.dim)
    if not texts_per_record:
        return np.zeros((0, backend.dim), dtype=np.float64)
    return np.vstack([stored[h] for h in hashes])


def embed_corpus(
    corpus: Corpus,
    metadata_strategy: MetadataStrategy,
    glossary_strategy: GlossaryStrategy,
    backend: EmbeddingBackend,
    cache_dir: str | Path | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Embed every column and glossary entry; returns (metadata, glossary) matrices.

    Rows follow corpus order. With a cache_dir, vectors are persisted per
    (backend, strategy) and warm re-runs issue zero backend calls.
    """
    meta_texts = [metadata_strategy_texts(metadata_strategy, m) for m in corpus.columns]
    gloss_texts = [glossary_strategy_texts(glossary_strategy, g) for g in corpus.glossary]
    meta_cache = gloss_cache = None
    if cache_dir is not None:
        cache_dir = Path(cache_dir)
        meta_cache = _VectorCache(
            cache_dir, backend.name, f"metadata-{metadata_strategy.value}"
        )
        gloss_cache = _VectorCache(
            cache_dir, backend.name, f"glossary-{glossary_strategy.value}"
        )
    meta_vectors = _embed_side(meta_texts, backend, meta_cache)
    gloss_vectors = _embed_side(gloss_texts, backend, gloss_cache)
    return meta_vectors, gloss_vectors
