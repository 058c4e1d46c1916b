"""Column Vocabulary Association (CVA): map table-column metadata to
controlled-vocabulary entries using only the metadata, never the table data.

Two matching engines share one corpus model and one evaluation harness:

* embedding composition + exact cosine top-k retrieval (`ranker`);
* zero-shot prompting of a chat-completions endpoint with the candidate
  glossary supplied as retrieval context (`llm_matcher`).

Supporting pieces: glossary topic-sharding for large vocabularies
(`partitioner`), hit@1/hit@5 scoring with model x temperature sweep
orchestration (`evaluator`), and a deterministic mock chat endpoint
(`mock_llm`) so the whole pipeline runs offline.
"""

__version__ = "0.1.0"

from .corpus import (
    ColumnMetadata,
    Corpus,
    GlossaryEntry,
    GroundTruth,
    load_corpus,
    load_ground_truth,
    parse_column_metadata,
    parse_glossary_entry,
)
from .embedding import (
    GlossaryStrategy,
    HashedTrigramBackend,
    MetadataStrategy,
    RemoteEmbeddingBackend,
    compose_glossary_embedding,
    compose_metadata_embedding,
    embed_corpus,
)
from .errors import CvaError
from .evaluator import (
    CellAggregate,
    EvalResult,
    SweepReport,
    aggregate_repetitions,
    evaluate_run,
    hit_at_k,
    strategy_sweep,
    sweep,
)
from .llm_matcher import (
    LlmRunConfig,
    PromptBundle,
    RunOutcome,
    chat_complete,
    parse_llm_response,
    render_prompts,
    run_matching,
)
from .mock_llm import MockLlmServer, serve_mock_llm
from .partitioner import ShardPlan, export_shards, partition_glossary, route_metadata
from .ranker import (
    RankedMapping,
    SimilarityIndex,
    build_index,
    cosine,
    rank_corpus,
    top_k,
)

__all__ = [
    "__version__",
    "CvaError",
    "ColumnMetadata",
    "GlossaryEntry",
    "GroundTruth",
    "Corpus",
    "load_corpus",
    "load_ground_truth",
    "parse_column_metadata",
    "parse_glossary_entry",
    "MetadataStrategy",
    "GlossaryStrategy",
    "HashedTrigramBackend",
    "RemoteEmbeddingBackend",
    "compose_metadata_embedding",
    "compose_glossary_embedding",
    "embed_corpus",
    "RankedMapping",
    "SimilarityIndex",
    "cosine",
    "build_index",
    "top_k",
    "rank_corpus",
    "PromptBundle",
    "LlmRunConfig",
    "RunOutcome",
    "render_prompts",
    "chat_complete",
    "parse_llm_response",
    "run_matching",
    "ShardPlan",
    "partition_glossary",
    "route_metadata",
    "export_shards",
    "EvalResult",
    "CellAggregate",
    "SweepReport",
    "hit_at_k",
    "evaluate_run",
    "aggregate_repetitions",
    "sweep",
    "strategy_sweep",
    "MockLlmServer",
    "serve_mock_llm",
]
