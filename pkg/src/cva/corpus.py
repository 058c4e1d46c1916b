"""Load and validate column-metadata, glossary, and ground-truth files.

All three inputs are UTF-8 JSONL: one JSON object per line, blank lines
ignored. Parsing is strict about required fields and id uniqueness because
every downstream metric keys on ids; a silently dropped or duplicated row
would skew hit@k denominators.

Column metadata line:

    {"id": "...", "label": "...", "table_id": "...", "table_name": "...",
     "table_columns": ["...", ...]}

Glossary line:

    {"id": "...", "label": "...", "desc": "..."}

Ground-truth line ("gt" is one correct glossary id or a list of them):

    {"id": "<column id>", "gt": "<glossary id>"}
    {"id": "<column id>", "gt": ["<glossary id>", ...]}
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import (
    CorpusLoadError,
    DuplicateIdError,
    EmptyTruthSetError,
    MalformedJsonError,
    MissingFieldError,
)

logger = logging.getLogger(__name__)

COLUMN_FIELDS = ("id", "label", "table_id", "table_name", "table_columns")
GLOSSARY_FIELDS = ("id", "label", "desc")


@dataclass(frozen=True)
class ColumnMetadata:
    """Metadata for one table column. No cell data is ever attached."""

    id: str
    label: str
    table_id: str
    table_name: str
    table_columns: tuple[str, ...]

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "label": self.label,
            "table_id": self.table_id,
            "table_name": self.table_name,
            "table_columns": list(self.table_columns),
        }

    def to_json_line(self) -> str:
        """Canonical single-line serialization; parse(to_json_line()) round-trips."""
        return json.dumps(self.to_json_dict(), ensure_ascii=False)


@dataclass(frozen=True)
class GlossaryEntry:
    """One controlled-vocabulary term: id (URI or minted), label, description."""

    id: str
    label: str
    desc: str = ""

    def to_json_dict(self) -> dict:
        return {"id": self.id, "label": self.label, "desc": self.desc}

    def to_json_line(self) -> str:
        return json.dumps(self.to_json_dict(), ensure_ascii=False)


@dataclass(frozen=True)
class GroundTruth:
    """Correct glossary ids per column id. Each set is non-empty."""

    truth: Mapping[str, frozenset[str]]

    def __len__(self) -> int:
        return len(self.truth)

    def __contains__(self, column_id: str) -> bool:
        return column_id in self.truth

    def __getitem__(self, column_id: str) -> frozenset[str]:
        return self.truth[column_id]

    def column_ids(self) -> list[str]:
        return list(self.truth.keys())


@dataclass(frozen=True)
class Corpus:
    """A validated metadata + glossary pair, immutable after load."""

    columns: tuple[ColumnMetadata, ...]
    glossary: tuple[GlossaryEntry, ...]

    @property
    def counts(self) -> tuple[int, int]:
        return (len(self.columns), len(self.glossary))

    def glossary_ids(self) -> frozenset[str]:
        return frozenset(entry.id for entry in self.glossary)


def _load_json_object(line: str, line_no: int | None, source: str | None) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedJsonError(f"invalid JSON ({exc.msg})", line_no, source) from exc
    if not isinstance(obj, dict):
        raise MalformedJsonError("expected a JSON object", line_no, source)
    return obj


def _require_str(obj: dict, field: str, line_no: int | None, source: str | None) -> str:
    if field not in obj:
        raise MissingFieldError(field, line_no, source)
    value = obj[field]
    if not isinstance(value, str):
        raise MalformedJsonError(f"field '{field}' must be a string", line_no, source)
    return value


def parse_column_metadata(
    line: str, line_no: int | None = None, source: str | None = None
) -> ColumnMetadata:
    """Parse one metadata JSONL line into a ColumnMetadata.

    Unknown extra keys are ignored. Values are never trimmed or rewritten;
    only the outer whitespace of the line itself is stripped.
    """
    obj = _load_json_object(line.strip(), line_no, source)
    col_id = _require_str(obj, "id", line_no, source)
    label = _require_str(obj, "label", line_no, source)
    table_id = _require_str(obj, "table_id", line_no, source)
    table_name = _require_str(obj, "table_name", line_no, source)
    if "table_columns" not in obj:
        raise MissingFieldError("table_columns", line_no, source)
    raw_columns = obj["table_columns"]
    if (
        not isinstance(raw_columns, list)
        or not raw_columns
        or not all(isinstance(c, str) for c in raw_columns)
    ):
        raise MalformedJsonError(
            "field 'table_columns' must be a non-empty list of strings", line_no, source
        )
    if not col_id:
        raise MalformedJsonError("field 'id' must be non-empty", line_no, source)
    if label not in raw_columns:
        logger.warning(
            "column %r: label %r does not appear in table_columns", col_id, label
        )
    return ColumnMetadata(
        id=col_id,
        label=label,
        table_id=table_id,
        table_name=table_name,
        table_columns=tuple(raw_columns),
    )


def parse_glossary_entry(
    line: str, line_no: int | None = None, source: str | None = None
) -> GlossaryEntry:
    """Parse one glossary JSONL line. A missing description becomes "" with a warning."""
    obj = _load_json_object(line.strip(), line_no, source)
    entry_id = _require_str(obj, "id", line_no, source)
    label = _require_str(obj, "label", line_no, source)
    if not entry_id:
        raise MalformedJsonError("field 'id' must be non-empty", line_no, source)
    desc = obj.get("desc")
    if desc is None:
        logger.warning("glossary entry %r has no description; using empty text", entry_id)
        desc = ""
    elif not isinstance(desc, str):
        raise MalformedJsonError("field 'desc' must be a string", line_no, source)
    return GlossaryEntry(id=entry_id, label=label, desc=desc)


def _iter_lines(path: Path) -> Iterator[tuple[int, str]]:
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            if raw.strip():
                yield line_no, raw


def load_column_metadata_file(path: str | Path) -> list[ColumnMetadata]:
    """Load and validate a metadata JSONL file; order-preserving."""
    path = Path(path)
    columns: list[ColumnMetadata] = []
    errors: list[str] = []
    duplicates: list[str] = []
    seen: set[str] = set()
    for line_no, raw in _iter_lines(path):
        try:
            column = parse_column_metadata(raw, line_no, path.name)
        except (MalformedJsonError, MissingFieldError) as exc:
            errors.append(str(exc))
            continue
        if column.id in seen:
            duplicates.append(f"{path.name}:{line_no}: duplicate column id {column.id!r}")
            continue
        seen.add(column.id)
        columns.append(column)
    if duplicates:
        raise DuplicateIdError("; ".join(duplicates))
    if errors:
        raise CorpusLoadError(errors)
    return columns


def load_glossary_file(path: str | Path) -> list[GlossaryEntry]:
    """Load and validate a glossary JSONL file; order-preserving."""
    path = Path(path)
    entries: list[GlossaryEntry] = []
    errors: list[str] = []
    duplicates: list[str] = []
    seen: set[str] = set()
    for line_no, raw in _iter_lines(path):
        try:
            entry = parse_glossary_entry(raw, line_no, path.name)
        except (MalformedJsonError, MissingFieldError) as exc:
            errors.append(str(exc))
            continue
        if entry.id in seen:
            duplicates.append(f"{path.name}:{line_no}: duplicate glossary id {entry.id!r}")
            continue
        seen.add(entry.id)
        entries.append(entry)
    if duplicates:
        raise DuplicateIdError("; ".join(duplicates))
    if errors:
        raise CorpusLoadError(errors)
    return entries


def load_corpus(metadata_path: str | Path, glossary_path: str | Path) -> Corpus:
    """Load both corpus files. Fails if any line fails; never drops rows silently."""
    columns = load_column_metadata_file(metadata_path)
    glossary = load_glossary_file(glossary_path)
    corpus = Corpus(columns=tuple(columns), glossary=tuple(glossary))
    logger.info(
        "loaded corpus: %d columns, %d glossary entries", *corpus.counts
    )
    return corpus


def load_ground_truth(
    path: str | Path, known_columns: Iterable[str] | None = None
) -> GroundTruth:
    """Load a ground-truth JSONL file.

    A scalar "gt" value is normalized to a one-element set. Repeated lines
    for the same column merge their sets. When `known_columns` is given,
    entries for unknown column ids are reported and skipped.
    """
    path = Path(path)
    known = set(known_columns) if known_columns is not None else None
    truth: dict[str, set[str]] = {}
    for line_no, raw in _iter_lines(path):
        obj = _load_json_object(raw.strip(), line_no, path.name)
        col_id = _require_str(obj, "id", line_no, path.name)
        if "gt" not in obj:
            raise MissingFieldError("gt", line_no, path.name)
        gt = obj["gt"]
        if isinstance(gt, str):
            ids = [gt]
        elif isinstance(gt, list) and all(isinstance(v, str) for v in gt):
            ids = list(gt)
        else:
            raise MalformedJsonError(
                "field 'gt' must be a string or a list of strings", line_no, path.name
            )
        if not ids:
            raise EmptyTruthSetError(
                f"{path.name}:{line_no}: column {col_id!r} has an empty truth set"
            )
        if known is not None and col_id not in known:
            logger.warning(
                "%s:%d: ground-truth column %r not in the loaded corpus; skipped",
                path.name,
                line_no,
                col_id,
            )
            continue
        if col_id in truth:
            logger.warning(
                "%s:%d: repeated ground-truth entry for %r; merging sets",
                path.name,
                line_no,
                col_id,
            )
        truth.setdefault(col_id, set()).update(ids)
    return GroundTruth(truth={k: frozenset(v) for k, v in truth.items()})


def write_metadata_file(columns: Iterable[ColumnMetadata], path: str | Path) -> None:
    """Write columns in canonical JSONL form (one line per column)."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        for column in columns:
            handle.write(column.to_json_line() + "\n")


def write_glossary_file(entries: Iterable[GlossaryEntry], path: str | Path) -> None:
    """Write glossary entries in canonical JSONL form."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        for entry in entries:
            handle.write(entry.to_json_line() + "\n")


def write_ground_truth_file(ground_truth: GroundTruth, path: str | Path) -> None:
    """Write ground truth in canonical JSONL form (sorted id lists)."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        for col_id, ids in ground_truth.truth.items():
            record = {"id": col_id, "gt": sorted(ids)}
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
