"""The ``cva`` command line: ingest, shard, rank, llm-match, eval, sweep, mock-llm.

Commands exchange data through a corpus directory (written by ``ingest``)
holding canonical ``metadata.jsonl``, ``glossary.jsonl``, and optionally
``ground_truth.jsonl``. Configuration precedence everywhere is flags over
environment variables over config files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .corpus import (
    Corpus,
    load_corpus,
    load_ground_truth,
    write_glossary_file,
    write_ground_truth_file,
    write_metadata_file,
)
from .embedding import (
    EmbeddingBackend,
    GlossaryStrategy,
    HashedTrigramBackend,
    MetadataStrategy,
    RemoteEmbeddingBackend,
)
from .errors import CvaError
from .evaluator import evaluate_run, sweep
from .llm_matcher import LlmRunConfig, run_matching
from .manifest import append_manifest
from .mock_llm import MockLlmServer
from .partitioner import export_shards, partition_glossary, route_metadata
from .ranker import rank_corpus, read_mappings, write_mappings

logger = logging.getLogger(__name__)

METADATA_FILE = "metadata.jsonl"
GLOSSARY_FILE = "glossary.jsonl"
GROUND_TRUTH_FILE = "ground_truth.jsonl"


def _load_corpus_dir(corpus_dir: str | Path) -> Corpus:
    corpus_dir = Path(corpus_dir)
    metadata = corpus_dir / METADATA_FILE
    glossary = corpus_dir / GLOSSARY_FILE
    if not metadata.exists() or not glossary.exists():
        raise CvaError(
            f"{corpus_dir} is not a corpus directory (run `cva ingest` first; "
            f"expected {METADATA_FILE} and {GLOSSARY_FILE})"
        )
    return load_corpus(metadata, glossary)


def _make_backend(args: argparse.Namespace) -> EmbeddingBackend:
    if args.backend == "local":
        return HashedTrigramBackend()
    return RemoteEmbeddingBackend(
        base_url=getattr(args, "embed_url", None),
        model=getattr(args, "embed_model", "default") or "default",
    )


def cmd_ingest(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.metadata, args.glossary)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_metadata_file(corpus.columns, out_dir / METADATA_FILE)
    write_glossary_file(corpus.glossary, out_dir / GLOSSARY_FILE)
    inputs = {"metadata": args.metadata, "glossary": args.glossary}
    outputs = [out_dir / METADATA_FILE, out_dir / GLOSSARY_FILE]
    counts = {"n_columns": corpus.counts[0], "n_glossary": corpus.counts[1]}
    if args.ground_truth:
        truth = load_ground_truth(args.ground_truth, (c.id for c in corpus.columns))
        write_ground_truth_file(truth, out_dir / GROUND_TRUTH_FILE)
        inputs["ground_truth"] = args.ground_truth
        outputs.append(out_dir / GROUND_TRUTH_FILE)
        counts["n_ground_truth"] = len(truth)
    append_manifest(out_dir, "ingest", counts, inputs, outputs)
    print(f"ingested {counts['n_columns']} columns, {counts['n_glossary']} glossary entries")
    if "n_ground_truth" in counts:
        print(f"ground truth covers {counts['n_ground_truth']} columns")
    return 0


def cmd_shard(args: argparse.Namespace) -> int:
    corpus = _load_corpus_dir(args.corpus)
    backend = _make_backend(args)
    plan = partition_glossary(corpus.glossary, args.n, backend, args.seed)
    route_metadata(corpus.columns, plan, backend)
    shard_manifest = export_shards(plan, args.out)
    append_manifest(
        args.out,
        "shard",
        {"n_shards": args.n, "backend": backend.name},
        {
            "metadata": Path(args.corpus) / METADATA_FILE,
            "glossary": Path(args.corpus) / GLOSSARY_FILE,
        },
        [Path(args.out) / f["file"] for f in shard_manifest["glossary_files"]],
        seed=args.seed,
    )
    sizes = plan.shard_sizes()
    print(
        f"wrote {plan.n_shards} glossary shards and {plan.n_shards} metadata shards "
        f"to {args.out} (shard sizes {min(sizes)}..{max(sizes)})"
    )
    return 0


def cmd_rank(args: argparse.Namespace) -> int:
    corpus = _load_corpus_dir(args.corpus)
    backend = _make_backend(args)
    mappings = rank_corpus(
        corpus,
        MetadataStrategy(args.meta_strategy),
        GlossaryStrategy(args.gloss_strategy),
        backend,
        k=args.k,
        cache_dir=args.cache_dir,
    )
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    scores_path = out_path.with_suffix(out_path.suffix + ".scores")
    write_mappings(mappings, out_path, scores_path)
    append_manifest(
        out_path.parent if str(out_path.parent) != "" else Path("."),
        "rank",
        {
            "meta_strategy": args.meta_strategy,
            "gloss_strategy": args.gloss_strategy,
            "backend": backend.name,
            "k": args.k,
        },
        {
            "metadata": Path(args.corpus) / METADATA_FILE,
            "glossary": Path(args.corpus) / GLOSSARY_FILE,
        },
        [out_path, scores_path],
    )
    print(f"wrote {len(mappings)} ranked mappings to {out_path}")
    return 0


def cmd_llm_match(args: argparse.Namespace) -> int:
    corpus = _load_corpus_dir(args.corpus)
    config = LlmRunConfig(
        model=args.model,
        temperature=args.temperature,
        batch_size=args.batch_size,
        repetitions=args.repetitions,
        max_retries=args.max_retries,
        timeout=args.timeout,
        base_url=args.llm_url,
    )
    out_dir = Path(args.out)
    outcomes = run_matching(corpus, config, args.round, out_dir / "runs")
    outputs = []
    summary = []
    for repetition, outcome in enumerate(outcomes, start=1):
        entry = {
            "repetition": repetition,
            "status": "completed" if outcome.completed else "failed",
        }
        if outcome.completed:
            mapping_path = out_dir / f"mappings_rep{repetition}.jsonl"
            write_mappings(outcome.mappings, mapping_path)
            outputs.append(mapping_path)
            entry["mappings"] = mapping_path.name
            entry["n_answered"] = len(outcome.mappings)
            entry["n_unanswered"] = len(outcome.unanswered)
        else:
            entry["reason"] = outcome.failure_reason
        summary.append(entry)
    summary_path = out_dir / "summary.json"
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(summary_path, "w", encoding="utf-8") as handle:
        json.dump(summary, handle, ensure_ascii=False, indent=2)
    outputs.append(summary_path)
    append_manifest(
        out_dir,
        "llm-match",
        {
            "model": args.model,
            "temperature": args.temperature,
            "batch_size": args.batch_size,
            "repetitions": args.repetitions,
            "round": args.round,
        },
        {
            "metadata": Path(args.corpus) / METADATA_FILE,
            "glossary": Path(args.corpus) / GLOSSARY_FILE,
        },
        outputs,
    )
    completed = sum(1 for o in outcomes if o.completed)
    print(f"{completed}/{len(outcomes)} repetitions completed; results in {out_dir}")
    return 0 if completed else 1


def cmd_eval(args: argparse.Namespace) -> int:
    mappings = read_mappings(args.mappings)
    truth = load_ground_truth(args.ground_truth)
    result = evaluate_run(mappings, truth)
    print(f"hit@1: {result.h1:.4f}")
    print(f"hit@5: {result.h5:.4f}")
    print(f"columns: {result.n_columns} (answered: {result.n_answered})")
    return 0


def _load_sweep_config(path: str | Path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as handle:
        return tomllib.load(handle)


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _load_sweep_config(args.config)
    section = config.get("sweep", config)
    endpoint = config.get("endpoint", {})
    corpus_dir = args.corpus or section.get("corpus")
    truth_path = args.ground_truth or section.get("ground_truth")
    if not corpus_dir or not truth_path:
        raise CvaError("sweep needs a corpus dir and a ground-truth file (flag or config)")
    corpus = _load_corpus_dir(corpus_dir)
    truth = load_ground_truth(truth_path, (c.id for c in corpus.columns))
    report = sweep(
        corpus,
        truth,
        models=list(section["models"]),
        temperatures=[float(t) for t in section["temperatures"]],
        repetitions=int(section.get("repetitions", 3)),
        round=int(section.get("round", 1)),
        batch_size=int(section.get("batch_size", 25)),
        base_url=args.llm_url or endpoint.get("llm_url"),
        timeout=float(section.get("timeout", 60.0)),
        max_retries=int(section.get("max_retries", 3)),
        archive_dir=Path(args.out) / "runs",
    )
    jsonl_path, text_path = report.write(args.out)
    append_manifest(
        args.out,
        "sweep",
        {
            "models": list(section["models"]),
            "temperatures": [float(t) for t in section["temperatures"]],
            "repetitions": int(section.get("repetitions", 3)),
        },
        {
            "config": args.config,
            "metadata": Path(corpus_dir) / METADATA_FILE,
            "glossary": Path(corpus_dir) / GLOSSARY_FILE,
            "ground_truth": truth_path,
        },
        [jsonl_path, text_path],
    )
    print(report.to_text(), end="")
    print(f"report written to {jsonl_path}")
    return 0


def cmd_mock_llm(args: argparse.Namespace) -> int:
    behavior: str | dict = args.behavior
    if args.behavior_script:
        with open(args.behavior_script, "r", encoding="utf-8") as handle:
            behavior = json.load(handle)
    server = MockLlmServer(
        behavior=behavior, seed=args.seed, port=args.port, host=args.host
    )
    print(f"mock chat endpoint on {server.url} (Ctrl-C to stop)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        print("stopping")
    finally:
        server.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cva",
        description=(
            "Column Vocabulary Association: map table-column metadata to "
            "controlled-vocabulary entries."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    ingest = commands.add_parser("ingest", help="validate corpus files into a corpus dir")
    ingest.add_argument("--metadata", required=True, help="column-metadata JSONL file")
    ingest.add_argument("--glossary", required=True, help="glossary JSONL file")
    ingest.add_argument("--ground-truth", help="optional ground-truth JSONL file")
    ingest.add_argument("--out", required=True, help="corpus directory to write")
    ingest.set_defaults(func=cmd_ingest)

    shard = commands.add_parser("shard", help="split the glossary into topic shards")
    shard.add_argument("--corpus", required=True, help="corpus directory")
    shard.add_argument("--n", type=int, default=75, help="number of shards")
    shard.add_argument("--seed", type=int, default=17)
    shard.add_argument("--backend", choices=("local", "remote"), default="local")
    shard.add_argument("--embed-url", help="embedding service URL (remote backend)")
    shard.add_argument("--embed-model", help="embedding model name (remote backend)")
    shard.add_argument("--out", required=True, help="shard directory to write")
    shard.set_defaults(func=cmd_shard)

    rank = commands.add_parser("rank", help="cosine top-k mapping for every column")
    rank.add_argument("--corpus", required=True, help="corpus directory")
    rank.add_argument(
        "--meta-strategy",
        choices=[s.value for s in MetadataStrategy],
        default=MetadataStrategy.LABEL.value,
    )
    rank.add_argument(
        "--gloss-strategy",
        choices=[s.value for s in GlossaryStrategy],
        default=GlossaryStrategy.LABEL.value,
    )
    rank.add_argument("--backend", choices=("local", "remote"), default="local")
    rank.add_argument("--embed-url", help="embedding service URL (remote backend)")
    rank.add_argument("--embed-model", help="embedding model name (remote backend)")
    rank.add_argument("--k", type=int, default=5, help="mappings per column (1-5)")
    rank.add_argument("--cache-dir", help="embedding cache directory")
    rank.add_argument("--out", required=True, help="mappings JSONL file to write")
    rank.set_defaults(func=cmd_rank)

    llm = commands.add_parser("llm-match", help="zero-shot matching via a chat endpoint")
    llm.add_argument("--corpus", required=True, help="corpus directory")
    llm.add_argument("--model", required=True)
    llm.add_argument("--temperature", type=float, default=0.5)
    llm.add_argument("--batch-size", type=int, default=25)
    llm.add_argument("--repetitions", type=int, default=3)
    llm.add_argument("--round", type=int, choices=(1, 2), default=1)
    llm.add_argument("--max-retries", type=int, default=3)
    llm.add_argument("--timeout", type=float, default=60.0)
    llm.add_argument("--llm-url", help="chat endpoint base URL (default: $CVA_LLM_URL)")
    llm.add_argument("--out", required=True, help="run directory to write")
    llm.set_defaults(func=cmd_llm_match)

    evaluate = commands.add_parser("eval", help="hit@1 / hit@5 of a mappings file")
    evaluate.add_argument("--mappings", required=True, help="mappings JSONL file")
    evaluate.add_argument("--ground-truth", required=True, help="ground-truth JSONL file")
    evaluate.set_defaults(func=cmd_eval)

    sweep_cmd = commands.add_parser("sweep", help="model x temperature grid run")
    sweep_cmd.add_argument("--config", required=True, help="TOML sweep configuration")
    sweep_cmd.add_argument("--corpus", help="corpus directory (overrides config)")
    sweep_cmd.add_argument("--ground-truth", help="ground-truth file (overrides config)")
    sweep_cmd.add_argument("--llm-url", help="chat endpoint base URL (overrides config)")
    sweep_cmd.add_argument("--out", required=True, help="report directory to write")
    sweep_cmd.set_defaults(func=cmd_sweep)

    mock = commands.add_parser("mock-llm", help="run the deterministic mock chat endpoint")
    mock.add_argument("--port", type=int, default=8085)
    mock.add_argument("--host", default="127.0.0.1")
    mock.add_argument(
        "--behavior",
        default="echo-valid-mapping",
        help="echo-valid-mapping | inject-hallucinations | fail-rate(p) | timeout | refuse",
    )
    mock.add_argument(
        "--behavior-script", help="JSON file mapping model names to behaviors ('*' = default)"
    )
    mock.add_argument("--seed", type=int, default=0)
    mock.set_defaults(func=cmd_mock_llm)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except CvaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
