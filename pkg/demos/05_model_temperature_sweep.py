#!/usr/bin/env python3
"""Walkthrough: a model x temperature sweep with failure accounting.

Runs the full grid against the mock endpoint with per-model behaviors: one
model answers correctly, one hallucinates (made-up ids get filtered, so
accuracy survives), one always fails (its cells render as X). Every cell
averages hit@1/hit@5 over three repetitions, and the report names the best
cell by (hit@5, then hit@1).
"""

import tempfile
from pathlib import Path

from cva import GroundTruth, MockLlmServer, sweep
from cva.corpus import ColumnMetadata, Corpus, GlossaryEntry

# Nine columns whose glossary is built from their own labels, so a model
# that echoes the right ids scores 1.0.
columns = []
glossary = []
truth = {}
for i in range(9):
    label = f"measurement {i} of series {i % 3}"
    columns.append(
        ColumnMetadata(
            id=f"col-{i}", label=label, table_id="t", table_name=f"Series {i % 3}",
            table_columns=(label,),
        )
    )
    glossary.append(GlossaryEntry(id=f"term-{i}", label=label, desc=f"defines {label}"))
    truth[f"col-{i}"] = frozenset({f"term-{i}"})
corpus = Corpus(columns=tuple(columns), glossary=tuple(glossary))
ground_truth = GroundTruth(truth=truth)

behaviors = {
    "accurate-model": "echo-valid-mapping",
    "hallucinating-model": "inject-hallucinations",
    "flaky-model": "fail-rate(1.0)",
}

out_dir = Path(tempfile.mkdtemp(prefix="cva-demo-sweep-"))
with MockLlmServer(behavior=behaviors, seed=23) as server:
    report = sweep(
        corpus,
        ground_truth,
        models=list(behaviors),
        temperatures=[0.5, 1.0],
        repetitions=3,
        batch_size=25,
        base_url=server.url,
        max_retries=0,
        timeout=10.0,
    )

print(report.to_text())
jsonl_path, text_path = report.write(out_dir)
print(f"machine-readable report: {jsonl_path}")
print(f"human-readable report:   {text_path}")
