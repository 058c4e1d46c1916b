"""Zero-shot LLM matching: prompt rendering, transport, and response parsing.

The Round 1 assistant instructions and user query template are fixed texts
(see tests/golden/); rendering only substitutes the serialized metadata
batch into the {input_metadata} slot. Round 2 reuses the same structure
with the vocabulary wording swapped ("DBpedia properties" becomes
"vocabulary terms"); the Round 2 wording is a structural adaptation, not a
sourced text. Some sentences deliberately appear in both the instructions
and the query; the repetition makes models follow the output contract more
reliably, so do not deduplicate them.

Everything here is zero-shot by construction: prompts carry the metadata
batch and the candidate glossary, never worked examples, ground truth, or
output from earlier runs.

Responses are parsed leniently (the required output format itself uses
single quotes, which strict JSON rejects), then sanitized: ids not in the
candidate glossary are dropped, duplicates collapse to their first rank,
and each column keeps at most five ids.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import requests

from .corpus import ColumnMetadata, Corpus, GlossaryEntry
from .errors import (
    ChatRequestError,
    ContextBudgetError,
    EmptyBatchError,
    UnparseableResponseError,
)
from .ranker import MAX_RANKED, RankedMapping

logger = logging.getLogger(__name__)

LLM_URL_ENV = "CVA_LLM_URL"
LLM_API_KEY_ENV = "CVA_LLM_API_KEY"

INPUT_METADATA_SLOT = "{input_metadata}"

_ASSISTANT_TEMPLATE = """Your task is to match column metadata to {vocab_plural}.
The full set of {vocab_plural} will be provided in the vector.
Columns metadata, instead, will be provided by the user and it will contain the following information: column ID, column label, table ID, table name and the labels of the other columns within that table. The matching between the column and the {vocab_plural} is to be made based on the semantic similarities between the metadata (i.e. what the column express), and {vocab_plural}.
You can add multiple {items_word}, but no more 5.
Return the results in the following format:
'colID': '00000_0_0000_XXX', 'propID': [{id_example}, ..., {id_example}].
Sort the matched {vocab_short} in descending order of relevance, starting with the most relevant.
Choose ONLY from the {vocab_plural}.
Return ONLY the results, no other text.
Return results for each and every single column metadata."""

_QUERY_TEMPLATE = """Based on the instruction given to you, find the most relevant {vocab_singular}, for each of the following metadata in json format:
{input_metadata}
Each json element is an independent column metadata. The metadata do not have any relationship, so the matching with the {vocab_plural} should only be based on the information provided within its own metadata.
You can add multiple {items_word}, but no more 5.
Return the results in the following format:
'colID': '00000_0_0000_XXX', 'propID': [{id_example}, ..., {id_example}].
Sort the matched {vocab_short} in descending order of relevance, starting with the most relevant.
Choose ONLY from the {vocab_plural} provided in the vector.
Return ONLY the results, no other text.
Return results for each and every single column metadata."""

_ROUND_WORDING = {
    1: {
        "vocab_plural": "DBpedia properties",
        "vocab_singular": "DBpedia property",
        "vocab_short": "DBpedia",
        "items_word": "properties",
        "id_example": "'http://dbpedia.org/ontology/PROPERTY_ID'",
    },
    2: {
        "vocab_plural": "vocabulary terms",
        "vocab_singular": "vocabulary term",
        "vocab_short": "vocabulary terms",
        "items_word": "terms",
        "id_example": "'TERM_ID'",
    },
}


def _fill(template: str, wording: dict[str, str]) -> str:
    # Plain replacement, not str.format: the {input_metadata} slot and the
    # JSON payload that eventually fills it are full of literal braces.
    for key, value in wording.items():
        template = template.replace("{" + key + "}", value)
    return template


def prompt_templates(round: int) -> tuple[str, str]:
    """(assistant_instructions, query_template) for a round, slot unsubstituted."""
    if round not in _ROUND_WORDING:
        raise ValueError(f"unknown round {round}; expected 1 or 2")
    wording = _ROUND_WORDING[round]
    return _fill(_ASSISTANT_TEMPLATE, wording), _fill(_QUERY_TEMPLATE, wording)


@dataclass(frozen=True)
class PromptBundle:
    """One request's worth of prompt text plus the candidate glossary payload."""

    assistant_instructions: str
    user_query: str
    glossary_payload: str


def serialize_metadata_batch(batch: Sequence[ColumnMetadata]) -> str:
    """The batch as a JSON array, one object per column, all five fields."""
    return json.dumps([m.to_json_dict() for m in batch], ensure_ascii=False, indent=2)


def render_prompts(
    corpus_batch: Sequence[ColumnMetadata],
    glossary: Sequence[GlossaryEntry],
    round: int = 1,
) -> PromptBundle:
    """Render the prompts for one metadata batch.

    The glossary is serialized as JSONL into the bundle's payload; how it
    reaches the model (attachment or inlined context) is the transport's
    concern, not the prompt's.
    """
    if not corpus_batch:
        raise EmptyBatchError("cannot render prompts for an empty metadata batch")
    instructions, query_template = prompt_templates(round)
    user_query = query_template.replace(
        INPUT_METADATA_SLOT, serialize_metadata_batch(corpus_batch)
    )
    payload = "\n".join(entry.to_json_line() for entry in glossary)
    return PromptBundle(
        assistant_instructions=instructions,
        user_query=user_query,
        glossary_payload=payload,
    )


@dataclass
class LlmRunConfig:
    """Settings for one model-temperature matching run."""

    model: str
    temperature: float
    batch_size: int = 25
    repetitions: int = 3
    max_retries: int = 3
    timeout: float = 60.0
    base_url: str | None = None
    api_key: str | None = None
    backoff: float = 0.5
    max_in_flight: int = 1
    max_context_chars: int = 1_000_000

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be within [0, 2]")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")

    def resolved_base_url(self) -> str:
        url = self.base_url or os.environ.get(LLM_URL_ENV)
        if not url:
            raise ChatRequestError(
                "no endpoint", f"pass base_url or set {LLM_URL_ENV}"
            )
        return url.rstrip("/")

    def resolved_api_key(self) -> str | None:
        return self.api_key if self.api_key is not None else os.environ.get(LLM_API_KEY_ENV)


def _archive_write(directory: Path | None, name: str, payload: dict) -> None:
    if directory is None:
        return
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / name, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, ensure_ascii=False, indent=2)


def chat_complete(
    config: LlmRunConfig,
    bundle: PromptBundle,
    archive_dir: str | Path | None = None,
    batch_index: int = 0,
) -> str:
    """Send one chat-completions request; return the assistant message text.

    The glossary payload is inlined ahead of the user query (for endpoints
    with no attachment mechanism the model must still see every candidate).
    Rate limiting (429), 5xx, and transport errors retry with exponential
    backoff; anything that survives retries raises ChatRequestError, whose
    reason labels the failed run.
    """
    archive = Path(archive_dir) if archive_dir is not None else None
    if len(bundle.glossary_payload) > config.max_context_chars:
        raise ContextBudgetError(
            f"glossary payload is {len(bundle.glossary_payload)} chars; "
            f"budget is {config.max_context_chars} (raise max_context_chars "
            "or shard the glossary)"
        )
    user_content = bundle.glossary_payload + "\n\n" + bundle.user_query
    body = {
        "model": config.model,
        "temperature": config.temperature,
        "messages": [
            {"role": "system", "content": bundle.assistant_instructions},
            {"role": "user", "content": user_content},
        ],
    }
    url = f"{config.resolved_base_url()}/v1/chat/completions"
    headers = {"Content-Type": "application/json"}
    api_key = config.resolved_api_key()
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    _archive_write(archive, f"{batch_index:04d}.request.json", {"url": url, "body": body})

    failure: ChatRequestError | None = None
    for attempt in range(config.max_retries + 1):
        if attempt:
            time.sleep(config.backoff * (2 ** (attempt - 1)))
        try:
            response = requests.post(url, json=body, headers=headers, timeout=config.timeout)
        except requests.Timeout:
            failure = ChatRequestError("timeout", f"no response within {config.timeout}s")
            continue
        except requests.RequestException as exc:
            failure = ChatRequestError("transport error", str(exc))
            continue
        if response.status_code == 429:
            failure = ChatRequestError("rate limited", "http 429")
            continue
        if response.status_code >= 500:
            failure = ChatRequestError(f"http {response.status_code}", "server error")
            continue
        if response.status_code != 200:
            failure = ChatRequestError(f"http {response.status_code}", "request rejected")
            break
        try:
            content = response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            failure = ChatRequestError("malformed response body", response.text[:200])
            break
        _archive_write(
            archive,
            f"{batch_index:04d}.response.json",
            {"status": response.status_code, "content": content},
        )
        return content
    assert failure is not None
    _archive_write(
        archive, f"{batch_index:04d}.response.json", {"error": str(failure)}
    )
    raise failure


def is_refusal_message(text: str) -> bool:
    """True for bare "failure"-style bodies some models emit instead of results."""
    return text.strip().strip("'\"`.").strip().lower() == "failure"


_FENCE_RE = re.compile(r"```[a-zA-Z0-9]*")
_PAIR_RE = re.compile(
    r"""['"]?colID['"]?\s*:\s*['"](?P<col>[^'"]+)['"]\s*,\s*['"]?propID['"]?\s*:\s*\[(?P<props>[^\]]*)\]""",
    re.DOTALL,
)
_ID_RE = re.compile(r"""['"]([^'"]+)['"]""")


def parse_llm_response(text: str, known_ids: set[str] | frozenset[str]) -> list[RankedMapping]:
    """Recover sanitized mappings from a raw model response.

    Tolerates single- or double-quoted keys and values, code fences, arrays
    or one-pair-per-line layouts, and interleaved prose. Per column: ids
    outside `known_ids` are dropped, duplicates keep their first rank, at
    most five survive. Columns whose ids all get filtered are omitted (the
    caller records them as unanswered). Raises UnparseableResponseError
    only when no column/id pair is recoverable at all.
    """
    cleaned = _FENCE_RE.sub("", text)
    mappings: list[RankedMapping] = []
    seen_columns: set[str] = set()
    found_pair = False
    for match in _PAIR_RE.finditer(cleaned):
        found_pair = True
        column_id = match.group("col")
        if column_id in seen_columns:
            logger.warning("response repeats column %r; keeping the first block", column_id)
            continue
        seen_columns.add(column_id)
        kept: list[str] = []
        for candidate in _ID_RE.findall(match.group("props")):
            if candidate not in known_ids:
                logger.debug("dropping unknown id %r for column %r", candidate, column_id)
                continue
            if candidate in kept:
                continue
            kept.append(candidate)
            if len(kept) == MAX_RANKED:
                break
        if kept:
            mappings.append(RankedMapping(column_id=column_id, glossary_ids=tuple(kept)))
        else:
            logger.warning("column %r: no ids survived sanitizing; unanswered", column_id)
    if not found_pair:
        raise UnparseableResponseError(
            "no colID/propID pairs recoverable from response"
        )
    return mappings


@dataclass
class RunOutcome:
    """The result of one repetition: completed with mappings, or failed with a reason."""

    mappings: list[RankedMapping] = field(default_factory=list)
    unanswered: tuple[str, ...] = ()
    failure_reason: str | None = None
    archive_dir: Path | None = None

    @property
    def completed(self) -> bool:
        return self.failure_reason is None


def split_batches(columns: Sequence[ColumnMetadata], batch_size: int) -> list[list[ColumnMetadata]]:
    return [list(columns[i : i + batch_size]) for i in range(0, len(columns), batch_size)]


def run_matching(
    corpus: Corpus,
    config: LlmRunConfig,
    round: int = 1,
    archive_dir: str | Path | None = None,
) -> list[RunOutcome]:
    """Run the full matching procedure `config.repetitions` times.

    Each repetition splits the columns into batches of `config.batch_size`
    (25 suits bulk endpoints; 1 suits one-at-a-time endpoints), renders
    prompts, sends requests, and merges the parsed mappings. Columns absent
    from every response are recorded as unanswered, never invented. A
    transport failure or an unparseable response fails that repetition;
    failures are recorded, not raised. Repetitions run sequentially so the
    request/response archive stays ordered.
    """
    known_ids = corpus.glossary_ids()
    known_columns = {c.id for c in corpus.columns}
    batches = split_batches(corpus.columns, config.batch_size)
    archive_root = Path(archive_dir) if archive_dir is not None else None
    outcomes: list[RunOutcome] = []
    for repetition in range(1, config.repetitions + 1):
        rep_dir = None
        if archive_root is not None:
            rep_dir = archive_root / config.model / str(config.temperature) / str(repetition)

        def _one_batch(item: tuple[int, list[ColumnMetadata]]) -> list[RankedMapping]:
            batch_index, batch = item
            bundle = render_prompts(batch, corpus.glossary, round)
            content = chat_complete(config, bundle, rep_dir, batch_index)
            if is_refusal_message(content):
                raise ChatRequestError("model refusal", "endpoint returned a failure message")
            return parse_llm_response(content, known_ids)

        try:
            if config.max_in_flight > 1:
                with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
                    per_batch = list(pool.map(_one_batch, enumerate(batches)))
            else:
                per_batch = [_one_batch(item) for item in enumerate(batches)]
        except (ChatRequestError, UnparseableResponseError, ContextBudgetError) as exc:
            reason = exc.reason if isinstance(exc, ChatRequestError) else str(exc)
            logger.warning(
                "%s @ %s repetition %d failed: %s",
                config.model,
                config.temperature,
                repetition,
                reason,
            )
            outcomes.append(RunOutcome(failure_reason=reason, archive_dir=rep_dir))
            continue

        merged: dict[str, RankedMapping] = {}
        for batch_mappings in per_batch:
            for mapping in batch_mappings:
                if mapping.column_id not in known_columns:
                    logger.warning(
                        "response invented column %r; ignored", mapping.column_id
                    )
                    continue
                merged.setdefault(mapping.column_id, mapping)
        ordered = [merged[c.id] for c in corpus.columns if c.id in merged]
        unanswered = tuple(c.id for c in corpus.columns if c.id not in merged)
        if unanswered:
            logger.info(
                "repetition %d: %d of %d columns unanswered",
                repetition,
                len(unanswered),
                len(corpus.columns),
            )
        outcomes.append(
            RunOutcome(mappings=ordered, unanswered=unanswered, archive_dir=rep_dir)
        )
    return outcomes
