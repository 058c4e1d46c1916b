#!/usr/bin/env python3
"""Walkthrough: load a corpus and rank glossary candidates for every column.

Builds a small film-themed corpus in a temp directory, loads it with full
validation, and runs cosine top-5 retrieval with the deterministic local
backend. No network, no services.
"""

import json
import tempfile
from pathlib import Path

from cva import (
    GlossaryStrategy,
    HashedTrigramBackend,
    MetadataStrategy,
    load_corpus,
    rank_corpus,
)

workdir = Path(tempfile.mkdtemp(prefix="cva-demo-"))
print(f"working in {workdir}\n")

# --- 1. Two JSONL input files: column metadata and a glossary -------------
columns = [
    {
        "id": "films_director",
        "label": "Director(s)",
        "table_id": "films",
        "table_name": "Film",
        "table_columns": ["Rank", "Title", "Year", "Director(s)"],
    },
    {
        "id": "films_year",
        "label": "Year",
        "table_id": "films",
        "table_name": "Film",
        "table_columns": ["Rank", "Title", "Year", "Director(s)"],
    },
    {
        "id": "albums_artist",
        "label": "Artist",
        "table_id": "albums",
        "table_name": "Best selling albums",
        "table_columns": ["Album", "Artist", "Sales"],
    },
]
glossary = [
    {"id": "vocab/director", "label": "film director",
     "desc": "The person who directs the making of a film."},
    {"id": "vocab/releaseYear", "label": "release year",
     "desc": "The year a creative work was released."},
    {"id": "vocab/musicalArtist", "label": "musical artist",
     "desc": "The performer credited with a musical work."},
    {"id": "vocab/runtime", "label": "runtime",
     "desc": "Duration of the work in minutes."},
    {"id": "vocab/budget", "label": "budget",
     "desc": "Money allocated to produce the work."},
]

metadata_path = workdir / "metadata.jsonl"
glossary_path = workdir / "glossary.jsonl"
metadata_path.write_text("\n".join(json.dumps(c) for c in columns) + "\n")
glossary_path.write_text("\n".join(json.dumps(g) for g in glossary) + "\n")

# --- 2. Load with validation (duplicate ids, missing fields, bad JSON all
#        fail loudly rather than silently dropping rows) -------------------
corpus = load_corpus(metadata_path, glossary_path)
print(f"loaded {corpus.counts[0]} columns and {corpus.counts[1]} glossary entries")

# --- 3. Rank: one embedding per column, one per glossary entry, cosine ----
# Strategy choice matters; here the column label alone is matched against
# label + description on the glossary side.
backend = HashedTrigramBackend()
mappings = rank_corpus(
    corpus,
    MetadataStrategy.LABEL,
    GlossaryStrategy.LABEL_CONCAT_DESC,
    backend,
    k=3,
)

print("\ntop-3 candidates per column (score in parentheses):")
for mapping in mappings:
    print(f"  {mapping.column_id}")
    for gid, score in zip(mapping.glossary_ids, mapping.scores):
        print(f"      {gid:<24} ({score:.3f})")
