"""The scripted chat endpoint, driven over real HTTP through run_matching."""

from __future__ import annotations

import pytest
import requests

from cva.evaluator import evaluate_run
from cva.llm_matcher import LlmRunConfig, run_matching
from cva.mock_llm import MockLlmServer, extract_glossary, extract_metadata_batch, serve_mock_llm

from conftest import self_glossary_corpus


def config_for(server: MockLlmServer, model: str = "mock-model", **overrides) -> LlmRunConfig:
    defaults = dict(
        model=model,
        temperature=0.5,
        batch_size=25,
        repetitions=1,
        max_retries=0,
        timeout=10.0,
        backoff=0.0,
        base_url=server.url,
    )
    defaults.update(overrides)
    return LlmRunConfig(**defaults)


def test_echo_valid_mapping_scores_perfectly():
    corpus, truth = self_glossary_corpus(8)
    with MockLlmServer(behavior="echo-valid-mapping", seed=1) as server:
        outcomes = run_matching(corpus, config_for(server))
    assert outcomes[0].completed
    assert len(outcomes[0].mappings) == 8
    result = evaluate_run(outcomes[0].mappings, truth)
    assert result.h1 == 1.0
    assert result.h5 == 1.0


def test_inject_hallucinations_filtered_out():
    corpus, truth = self_glossary_corpus(6)
    known = corpus.glossary_ids()
    with MockLlmServer(behavior="inject-hallucinations", seed=1) as server:
        outcomes = run_matching(corpus, config_for(server))
    assert outcomes[0].completed
    for mapping in outcomes[0].mappings:
        assert all(gid in known for gid in mapping.glossary_ids)
    # the real id still leads after the fake one is dropped
    assert evaluate_run(outcomes[0].mappings, truth).h1 == 1.0


def test_fail_rate_one_fails_every_repetition():
    corpus, _ = self_glossary_corpus(4)
    with MockLlmServer(behavior="fail-rate(1.0)", seed=1) as server:
        outcomes = run_matching(corpus, config_for(server, repetitions=3))
    assert len(outcomes) == 3
    assert all(not o.completed for o in outcomes)


def test_fail_rate_zero_always_succeeds():
    corpus, _ = self_glossary_corpus(4)
    with MockLlmServer(behavior="fail-rate(0.0)", seed=1) as server:
        outcomes = run_matching(corpus, config_for(server, repetitions=2))
    assert all(o.completed for o in outcomes)


def test_timeout_behavior_fails_run():
    corpus, _ = self_glossary_corpus(2)
    with MockLlmServer(behavior="timeout", seed=1, timeout_delay=5.0) as server:
        outcomes = run_matching(
            corpus, config_for(server, timeout=0.3, max_retries=0)
        )
    assert not outcomes[0].completed
    assert outcomes[0].failure_reason == "timeout"


def test_refuse_behavior_reports_model_refusal():
    corpus, _ = self_glossary_corpus(2)
    with MockLlmServer(behavior="refuse", seed=1) as server:
        outcomes = run_matching(corpus, config_for(server))
    assert not outcomes[0].completed
    assert outcomes[0].failure_reason == "model refusal"


def test_per_model_behavior_script():
    corpus, _ = self_glossary_corpus(3)
    script = {"good-model": "echo-valid-mapping", "bad-model": "fail-rate(1.0)"}
    with MockLlmServer(behavior=script, seed=1) as server:
        good = run_matching(corpus, config_for(server, model="good-model"))
        bad = run_matching(corpus, config_for(server, model="bad-model"))
        fallback = run_matching(corpus, config_for(server, model="unlisted-model"))
    assert good[0].completed
    assert not bad[0].completed
    assert fallback[0].completed  # "*" default is echo-valid-mapping


def test_server_responses_deterministic_for_seed():
    corpus, _ = self_glossary_corpus(5)
    results = []
    for _ in range(2):
        with MockLlmServer(behavior="echo-valid-mapping", seed=7) as server:
            outcomes = run_matching(corpus, config_for(server))
            results.append([(m.column_id, m.glossary_ids) for m in outcomes[0].mappings])
    assert results[0] == results[1]


def test_batch_size_one_issues_one_request_per_column():
    corpus, truth = self_glossary_corpus(4)
    with MockLlmServer(behavior="echo-valid-mapping", seed=2) as server:
        outcomes = run_matching(corpus, config_for(server, batch_size=1))
        assert outcomes[0].completed
        assert len(outcomes[0].mappings) == 4
    assert evaluate_run(outcomes[0].mappings, truth).h1 == 1.0


def test_concurrent_batches_preserve_order_and_results():
    corpus, truth = self_glossary_corpus(10)
    with MockLlmServer(behavior="echo-valid-mapping", seed=6) as server:
        sequential = run_matching(corpus, config_for(server, batch_size=2))
        concurrent = run_matching(
            corpus, config_for(server, batch_size=2, max_in_flight=4)
        )
    assert sequential[0].completed and concurrent[0].completed
    assert [m.column_id for m in sequential[0].mappings] == [
        m.column_id for m in concurrent[0].mappings
    ]
    assert evaluate_run(concurrent[0].mappings, truth).h1 == 1.0


def test_sweep_grid_shape_seven_models_five_temperatures():
    from cva.evaluator import sweep

    corpus, truth = self_glossary_corpus(2)
    models = [f"model-{i}" for i in range(7)]
    temperatures = [0.5, 0.75, 1.0, 1.25, 1.5]
    with MockLlmServer(behavior="echo-valid-mapping", seed=4) as server:
        report = sweep(
            corpus,
            truth,
            models=models,
            temperatures=temperatures,
            repetitions=1,
            base_url=server.url,
            max_retries=0,
            timeout=10.0,
        )
    assert len(report.cells) == 35
    assert {cell.model for cell in report.cells} == set(models)
    assert report.best_cell() is not None


def test_unknown_behavior_rejected():
    with pytest.raises(ValueError):
        MockLlmServer(behavior="explode")
    with pytest.raises(ValueError):
        MockLlmServer(behavior="fail-rate(1.5)")


def test_unknown_path_is_404():
    with MockLlmServer() as server:
        response = requests.post(f"{server.url}/v1/other", json={}, timeout=5)
    assert response.status_code == 404


def test_serve_mock_llm_starts_on_free_port():
    server = serve_mock_llm(0, "echo-valid-mapping", seed=3)
    try:
        assert server.url.startswith("http://127.0.0.1:")
    finally:
        server.stop()


def test_extract_helpers_on_malformed_content():
    assert extract_metadata_batch("no markers here") == []
    ids, by_label = extract_glossary("plain text\n{broken json")
    assert ids == [] and by_label == {}
