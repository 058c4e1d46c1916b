"""Shared fixtures: tiny corpora, self-glossary builders, and a mock endpoint."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from cva.corpus import ColumnMetadata, Corpus, GlossaryEntry, GroundTruth

GOLDEN_DIR = Path(__file__).parent / "golden"

LISTING_METADATA_LINE = (
    '{"id": "58891288_0_1117541047012405958_Director(s)", "label": "Director(s)", '
    '"table_id": "58891288_0_1117541047012405958", "table_name": "Film", '
    '"table_columns": ["Rank", "Title", "Year", "Director(s)", "Overall Rank"]}'
)
LISTING_GLOSSARY_LINE = (
    '{"id": "http://dbpedia.org/ontology/director", "label": "film director", '
    '"desc": "A film director is a person who directs the making of a film."}'
)


def make_column(i: int, label: str | None = None, table_name: str = "Table") -> ColumnMetadata:
    label = label if label is not None else f"column {i}"
    return ColumnMetadata(
        id=f"col-{i:04d}",
        label=label,
        table_id=f"tbl-{i % 7}",
        table_name=table_name,
        table_columns=(label, "other"),
    )


def make_entry(i: int, label: str | None = None, desc: str | None = None) -> GlossaryEntry:
    return GlossaryEntry(
        id=f"term-{i:04d}",
        label=label if label is not None else f"term {i}",
        desc=desc if desc is not None else f"description of term {i}",
    )


def self_glossary_corpus(n_columns: int) -> tuple[Corpus, GroundTruth]:
    """A corpus whose glossary is built from its own (unique) column labels.

    Ground truth maps each column to the entry carrying its label, so a
    label-based matcher should score hit@1 = 1.0.
    """
    columns = []
    glossary = []
    truth = {}
    for i in range(n_columns):
        label = f"distinct label {i} alpha{i % 13} beta{i % 7}"
        columns.append(make_column(i, label=label, table_name=f"table {i % 11}"))
        glossary.append(GlossaryEntry(id=f"term-{i:04d}", label=label, desc=f"means {label}"))
        truth[f"col-{i:04d}"] = frozenset({f"term-{i:04d}"})
    corpus = Corpus(columns=tuple(columns), glossary=tuple(glossary))
    return corpus, GroundTruth(truth=truth)


def write_jsonl(path: Path, records: list[dict]) -> Path:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


@pytest.fixture
def tiny_corpus() -> Corpus:
    columns = tuple(make_column(i) for i in range(6))
    glossary = tuple(make_entry(i) for i in range(10))
    return Corpus(columns=columns, glossary=glossary)


@pytest.fixture
def corpus_files(tmp_path: Path) -> tuple[Path, Path]:
    metadata = write_jsonl(
        tmp_path / "metadata.jsonl",
        [make_column(i).to_json_dict() for i in range(6)],
    )
    glossary = write_jsonl(
        tmp_path / "glossary.jsonl",
        [make_entry(i).to_json_dict() for i in range(10)],
    )
    return metadata, glossary
