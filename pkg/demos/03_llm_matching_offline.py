#!/usr/bin/env python3
"""Walkthrough: zero-shot LLM matching against the bundled mock endpoint.

Shows the whole chat pipeline offline: prompt rendering (with the glossary
attached as retrieval context), request/response archiving, lenient parsing
with hallucination filtering, and per-repetition outcomes including forced
failures. Swap the mock URL for a real chat-completions endpoint (plus
CVA_LLM_API_KEY) and nothing else changes.
"""

import tempfile
from pathlib import Path

from cva import LlmRunConfig, MockLlmServer, evaluate_run, render_prompts, run_matching
from cva.corpus import ColumnMetadata, Corpus, GlossaryEntry, GroundTruth

columns = tuple(
    ColumnMetadata(
        id=f"col-{i}", label=label, table_id="t", table_name="Stocks",
        table_columns=("Ticker", "Price", "Volume"),
    )
    for i, label in enumerate(["Ticker", "Price", "Volume"])
)
glossary = tuple(
    GlossaryEntry(id=f"term-{i}", label=label, desc=f"The {label.lower()} of a listing.")
    for i, label in enumerate(["Ticker", "Price", "Volume"])
)
corpus = Corpus(columns=columns, glossary=glossary)
truth = GroundTruth(truth={f"col-{i}": frozenset({f"term-{i}"}) for i in range(3)})

# --- 1. What a rendered prompt looks like ---------------------------------
bundle = render_prompts(corpus.columns, corpus.glossary, round=1)
print("assistant instructions start with:")
print("  " + bundle.assistant_instructions.splitlines()[0])
print("user query starts with:")
print("  " + bundle.user_query.splitlines()[0])
print(f"glossary payload: {len(bundle.glossary_payload.splitlines())} JSONL lines\n")

archive = Path(tempfile.mkdtemp(prefix="cva-demo-llm-"))

# --- 2. A well-behaved model (mock echoes valid glossary ids) -------------
with MockLlmServer(behavior="echo-valid-mapping", seed=11) as server:
    config = LlmRunConfig(
        model="well-behaved", temperature=0.5, batch_size=25, repetitions=2,
        base_url=server.url,
    )
    outcomes = run_matching(corpus, config, round=1, archive_dir=archive)

for i, outcome in enumerate(outcomes, start=1):
    result = evaluate_run(outcome.mappings, truth)
    print(f"repetition {i}: completed, hit@1={result.h1:.2f}, hit@5={result.h5:.2f}")
print(f"requests/responses archived under {archive}\n")

# --- 3. A hallucinating model: made-up ids are filtered client-side -------
with MockLlmServer(behavior="inject-hallucinations", seed=11) as server:
    config = LlmRunConfig(
        model="hallucinator", temperature=1.0, batch_size=25, repetitions=1,
        base_url=server.url,
    )
    outcome = run_matching(corpus, config)[0]
known = corpus.glossary_ids()
assert all(gid in known for m in outcome.mappings for gid in m.glossary_ids)
print("hallucinating model: every surviving id is a real glossary id")

# --- 4. A broken endpoint: failures are recorded, never raised ------------
with MockLlmServer(behavior="fail-rate(1.0)", seed=11) as server:
    config = LlmRunConfig(
        model="broken", temperature=1.5, batch_size=25, repetitions=3,
        max_retries=0, base_url=server.url,
    )
    failures = run_matching(corpus, config)
print(
    f"broken endpoint: {sum(not o.completed for o in failures)}/3 repetitions failed "
    f"(reason: {failures[0].failure_reason}) - such cells render as X in reports"
)
