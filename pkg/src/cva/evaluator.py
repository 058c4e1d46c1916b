"""hit@1 / hit@5 scoring, repetition aggregation, and sweep reports.

Metrics are averaged over the ground-truth columns, never over the
predictions: a column with no prediction scores 0, so partial answers
cannot inflate accuracy. With multi-answer ground truth a hit means any
correct id appears in the top k.

Two sweep shapes are supported: a model x temperature grid (each cell
averaged over repetitions, failed cells rendered as "X") and an embedding
strategy sweep over the nine standard metadata/glossary composition
pairings.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import Corpus, GroundTruth
from .embedding import EmbeddingBackend, GlossaryStrategy, MetadataStrategy
from .llm_matcher import LlmRunConfig, RunOutcome, run_matching
from .ranker import RankedMapping, rank_corpus

logger = logging.getLogger(__name__)

FAILED_CELL_MARK = "X"

# The nine metadata/glossary composition pairings routinely evaluated
# (label-only, concatenations, and vector sums on either side).
DEFAULT_STRATEGY_PAIRS: tuple[tuple[MetadataStrategy, GlossaryStrategy], ...] = (
    (MetadataStrategy.LABEL, GlossaryStrategy.LABEL),
    (MetadataStrategy.LABEL, GlossaryStrategy.LABEL_CONCAT_DESC),
    (MetadataStrategy.LABEL_CONCAT_TABLE_NAME, GlossaryStrategy.LABEL),
    (MetadataStrategy.LABEL_CONCAT_TABLE_NAME, GlossaryStrategy.LABEL_CONCAT_DESC),
    (MetadataStrategy.LABEL, GlossaryStrategy.DESC),
    (MetadataStrategy.LABEL_CONCAT_TABLE_NAME, GlossaryStrategy.DESC),
    (MetadataStrategy.LABEL_SUM_TABLE_NAME, GlossaryStrategy.DESC),
    (MetadataStrategy.LABEL_SUM_TABLE_NAME, GlossaryStrategy.DESC_SUM_LABEL),
    (MetadataStrategy.LABEL_SUM_TABLE_NAME, GlossaryStrategy.LABEL),
)


@dataclass(frozen=True)
class EvalResult:
    """hit@1 / hit@5 for one run over one ground truth."""

    h1: float
    h5: float
    n_columns: int
    n_answered: int


@dataclass(frozen=True)
class CellAggregate:
    """One model-temperature cell: repetition means plus failure accounting."""

    model: str
    temperature: float
    mean_h1: float | None
    mean_h5: float | None
    n_success: int
    n_failed: int

    @property
    def failed(self) -> bool:
        return self.n_success == 0

    @property
    def status(self) -> str:
        return "failed" if self.failed else "ok"


def hit_at_k(ranked: Sequence[str], truth: frozenset[str] | set[str], k: int) -> int:
    """1 if any of the first min(k, len) ranked ids is a correct one, else 0."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return int(any(gid in truth for gid in ranked[:k]))


def evaluate_run(
    mappings: Sequence[RankedMapping], ground_truth: GroundTruth
) -> EvalResult:
    """Score one run. The denominator is the ground truth, not the predictions."""
    if not len(ground_truth):
        raise ValueError("ground truth is empty; nothing to evaluate")
    by_column = {}
    for mapping in mappings:
        if mapping.column_id not in ground_truth:
            logger.warning(
                "prediction for %r has no ground-truth entry; ignored", mapping.column_id
            )
            continue
        if mapping.column_id in by_column:
            logger.warning("repeated prediction for %r; keeping the first", mapping.column_id)
            continue
        by_column[mapping.column_id] = mapping
    hits1 = hits5 = 0
    for column_id, truth in ground_truth.truth.items():
        mapping = by_column.get(column_id)
        if mapping is None:
            continue
        hits1 += hit_at_k(mapping.glossary_ids, truth, 1)
        hits5 += hit_at_k(mapping.glossary_ids, truth, 5)
    n = len(ground_truth)
    return EvalResult(
        h1=hits1 / n, h5=hits5 / n, n_columns=n, n_answered=len(by_column)
    )


def aggregate_repetitions(
    outcomes: Sequence[RunOutcome],
    ground_truth: GroundTruth,
    model: str = "",
    temperature: float = 0.0,
) -> CellAggregate:
    """Mean h1/h5 over completed repetitions; a cell with zero successes is failed."""
    if not outcomes:
        raise ValueError("at least one outcome is required")
    results = [evaluate_run(o.mappings, ground_truth) for o in outcomes if o.completed]
    n_failed = sum(1 for o in outcomes if not o.completed)
    if not results:
        return CellAggregate(
            model=model,
            temperature=temperature,
            mean_h1=None,
            mean_h5=None,
            n_success=0,
            n_failed=n_failed,
        )
    return CellAggregate(
        model=model,
        temperature=temperature,
        mean_h1=sum(r.h1 for r in results) / len(results),
        mean_h5=sum(r.h5 for r in results) / len(results),
        n_success=len(results),
        n_failed=n_failed,
    )


@dataclass
class SweepReport:
    """A full model x temperature grid of aggregated cells."""

    models: tuple[str, ...]
    temperatures: tuple[float, ...]
    cells: list[CellAggregate]
    repetitions: int

    def cell(self, model: str, temperature: float) -> CellAggregate:
        for cell in self.cells:
            if cell.model == model and cell.temperature == temperature:
                return cell
        raise KeyError((model, temperature))

    def best_cell(self) -> CellAggregate | None:
        """Highest (mean h5, then mean h1); ties resolve by model name, then temperature."""
        ranked = sorted(
            (c for c in self.cells if not c.failed),
            key=lambda c: (-c.mean_h5, -c.mean_h1, c.model, c.temperature),
        )
        return ranked[0] if ranked else None

    def to_jsonl_lines(self) -> list[str]:
        lines = []
        for cell in self.cells:
            lines.append(
                json.dumps(
                    {
                        "model": cell.model,
                        "temperature": cell.temperature,
                        "h1": cell.mean_h1,
                        "h5": cell.mean_h5,
                        "n_success": cell.n_success,
                        "n_failed": cell.n_failed,
                        "status": cell.status,
                    },
                    ensure_ascii=False,
                )
            )
        return lines

    def to_text(self) -> str:
        """Render the grid with h1/h5 sub-columns per temperature; failed cells show X."""
        name_width = max([len("model")] + [len(m) for m in self.models])
        header_1 = " " * name_width
        header_2 = "model".ljust(name_width)
        for temperature in self.temperatures:
            header_1 += f" | {temperature:^15g}"
            header_2 += " | " + "h1".rjust(6) + " " + "h5".rjust(8)
        rows = [header_1, header_2, "-" * len(header_2)]
        for model in self.models:
            row = model.ljust(name_width)
            for temperature in self.temperatures:
                cell = self.cell(model, temperature)
                if cell.failed:
                    row += " | " + FAILED_CELL_MARK.rjust(6) + " " + FAILED_CELL_MARK.rjust(8)
                else:
                    row += f" | {cell.mean_h1:6.3f} {cell.mean_h5:8.3f}"
            rows.append(row)
        best = self.best_cell()
        if best is not None:
            rows.append(
                f"best: {best.model} @ {best.temperature:g} "
                f"(h1={best.mean_h1:.3f}, h5={best.mean_h5:.3f})"
            )
        else:
            rows.append("best: none (every cell failed)")
        return "\n".join(rows) + "\n"

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        """Write report.jsonl and report.txt; both are deterministic byte-for-byte."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        jsonl_path = out_dir / "report.jsonl"
        text_path = out_dir / "report.txt"
        jsonl_path.write_text(
            "\n".join(self.to_jsonl_lines()) + "\n", encoding="utf-8"
        )
        text_path.write_text(self.to_text(), encoding="utf-8")
        return jsonl_path, text_path


def sweep(
    corpus: Corpus,
    ground_truth: GroundTruth,
    models: Sequence[str],
    temperatures: Sequence[float],
    repetitions: int = 3,
    round: int = 1,
    batch_size: int = 25,
    base_url: str | None = None,
    api_key: str | None = None,
    timeout: float = 60.0,
    max_retries: int = 3,
    archive_dir: str | Path | None = None,
) -> SweepReport:
    """Run the matching pipeline over every model x temperature cell.

    Failures stay inside their cell: a model that always errors out yields a
    failed cell, not a failed sweep.
    """
    cells = []
    for model in models:
        for temperature in temperatures:
            config = LlmRunConfig(
                model=model,
                temperature=temperature,
                batch_size=batch_size,
                repetitions=repetitions,
                base_url=base_url,
                api_key=api_key,
                timeout=timeout,
                max_retries=max_retries,
            )
            outcomes = run_matching(corpus, config, round, archive_dir)
            cells.append(
                aggregate_repetitions(outcomes, ground_truth, model, temperature)
            )
            logger.info(
                "cell %s @ %g: %s", model, temperature, cells[-1].status
            )
    return SweepReport(
        models=tuple(models),
        temperatures=tuple(temperatures),
        cells=cells,
        repetitions=repetitions,
    )


@dataclass(frozen=True)
class StrategyCell:
    """One embedding-combination row of a strategy sweep."""

    metadata_strategy: MetadataStrategy
    glossary_strategy: GlossaryStrategy
    h1: float
    h5: float


def strategy_sweep(
    corpus: Corpus,
    ground_truth: GroundTruth,
    backend: EmbeddingBackend,
    pairs: Sequence[tuple[MetadataStrategy, GlossaryStrategy]] = DEFAULT_STRATEGY_PAIRS,
    k: int = 5,
    cache_dir: str | Path | None = None,
) -> list[StrategyCell]:
    """Rank and score the corpus once per strategy pairing."""
    cells = []
    for metadata_strategy, glossary_strategy in pairs:
        mappings = rank_corpus(
            corpus, metadata_strategy, glossary_strategy, backend, k, cache_dir
        )
        result = evaluate_run(mappings, ground_truth)
        cells.append(
            StrategyCell(
                metadata_strategy=metadata_strategy,
                glossary_strategy=glossary_strategy,
                h1=result.h1,
                h5=result.h5,
            )
        )
    return cells


def strategy_sweep_text(cells: Sequence[StrategyCell]) -> str:
    """Human-readable table for a strategy sweep."""
    rows = [f"{'metadata':<24} {'glossary':<24} {'h1':>6} {'h5':>6}"]
    rows.append("-" * len(rows[0]))
    for cell in cells:
        rows.append(
            f"{cell.metadata_strategy.value:<24} {cell.glossary_strategy.value:<24} "
            f"{cell.h1:6.3f} {cell.h5:6.3f}"
        )
    return "\n".join(rows) + "\n"
