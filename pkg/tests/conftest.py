from __future__ import annotations

import json

import pytest


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when == "call" and "test_acceptance" in report.nodeid:
        outcome = "PASS" if report.passed else "FAIL"
        name = report.nodeid.split("::")[-1]
        print(f"[ACCEPTANCE {outcome}] {name}")

from themekit import (
    AnalysisContext,
    Gateway,
    GenerationParams,
    KeywordScenario,
    PipelineConfig,
    RunStore,
    Runner,
    ScriptedBackend,
    generate_corpus,
    keyword_map,
)


@pytest.fixture
def ctx() -> AnalysisContext:
    return AnalysisContext(
        research_questions=("What typical kinds of theft does the corpus describe?",),
        analysis_kind="semantic",
        topic_focus="theft behavior",
        theme_specification="a recurring pattern of how and what was stolen",
    )


@pytest.fixture
def corpus30():
    return generate_corpus(30, seed=7)


def tight_config(seed: int = 7, k: int = 3, **overrides) -> PipelineConfig:
    """Small context window so even tiny corpora span several batches."""
    defaults = dict(
        params=GenerationParams(max_tokens=256, context_limit=1600),
        stage_max_tokens={"coding": 256, "collation": 256, "merge": 420, "classification": 256},
        sample_size=5,
        interim_token_reserve=10,
        seed=seed,
        k=k,
    )
    defaults.update(overrides)
    return PipelineConfig(**defaults)


def scenario_backend(script: dict | None = None, k: int = 3) -> ScriptedBackend:
    return ScriptedBackend(script=script or {}, default=KeywordScenario(keyword_map(), k=k))


def make_runner(
    tmp_path,
    dataset,
    ctx,
    backend=None,
    config: PipelineConfig | None = None,
    run_name: str = "run",
) -> Runner:
    store = RunStore.create(tmp_path / run_name, dataset, ctx, config={})
    gateway = Gateway(backend or scenario_backend(), audit=store.audit_sink, sleep=lambda s: None)
    return Runner(store, gateway, config=config or tight_config())


def echo_codes_rule(prefix: str = "code-"):
    """Scripted default that codes every item as '<prefix><id>'."""
    from themekit.prompts import parse_batch_items

    def rule(stage, batch_index, request):
        items = parse_batch_items(request.user_message)
        return json.dumps([{"id": i, "code": f"{prefix}{i}"} for i, _ in items])

    return rule
