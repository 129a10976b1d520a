"""Seed a run (corpus + round-1 codes) and serve the review API.

Used by the frontend integration tests: they spawn this script, wait for the
port to answer, and drive the TypeScript client against it.
"""

import argparse
import json
from pathlib import Path

import uvicorn

from themekit import (
    AnalysisContext,
    Gateway,
    KeywordScenario,
    PipelineConfig,
    RunStore,
    Runner,
    ScriptedBackend,
    generate_corpus,
    keyword_map,
)
from themekit.service import create_app


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--root", required=True)
    parser.add_argument("--port", type=int, required=True)
    parser.add_argument("--n", type=int, default=785)
    args = parser.parse_args()

    root = Path(args.root)
    root.mkdir(parents=True, exist_ok=True)
    script_path = root / "scenario.json"
    script_path.write_text(
        json.dumps({"default": {"mode": "keyword-echo", "keywords": keyword_map(), "k": 3}}),
        encoding="utf-8",
    )

    corpus = generate_corpus(args.n, seed=42)
    context = AnalysisContext(
        research_questions=("What typical kinds of theft does the corpus describe?",),
    )
    store = RunStore.create(
        root / "seeded",
        corpus,
        context,
        config={"backend_kind": "scripted", "backend_script": str(script_path), "k": 3},
        name="seeded",
    )
    backend = ScriptedBackend(default=KeywordScenario(keyword_map(), k=3))
    runner = Runner(
        store,
        Gateway(backend, audit=store.audit_sink),
        config=PipelineConfig(seed=42),
    )
    runner.run_initial_coding(1, seed=42)
    store.close()
    print(f"seeded run with {args.n} data points; serving on port {args.port}", flush=True)

    uvicorn.run(create_app(root), host="127.0.0.1", port=args.port, log_level="warning")


if __name__ == "__main__":
    main()
