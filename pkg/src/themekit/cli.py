"""Command-line driver for every stage and evaluation.

Exit codes: 0 success, 2 configuration/usage, 3 data, 4 backend, 5 validation
(invalid stage output, unapproved themes, locked store).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import RunConfig
from .errors import (
    ApprovalRequiredError,
    BackendError,
    ConfigError,
    DataError,
    StageValidationError,
    StoreError,
    ThemekitError,
)
from .evaluation import (
    flows_to_csv,
    recall_at_k,
    render_recall_text,
    render_tally_text,
    report_to_json,
    tally_quality,
    theme_mapping,
)
from .model import AnalysisContext, ThemeSet, load_dataset
from .pipeline import Feedback, Runner
from .store import RunStore

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_BACKEND = 4
EXIT_VALIDATION = 5


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="config file (documented key/value grammar)")
    parser.add_argument("--run-dir", help="run directory")
    parser.add_argument("--backend", help="backend override: scripted:<file> or http:<endpoint>,<model>")
    parser.add_argument("--seed", type=int, help="deterministic seed")
    parser.add_argument("--round", type=int, dest="round_", help="coding round")
    parser.add_argument("--k", type=int, help="ranked themes per data point")
    parser.add_argument("--parallelism", type=int, help="classification worker pool size")
    parser.add_argument("--sample-size", type=int, help="interim code sample size")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="themekit",
        description="Human-in-the-loop thematic analysis of a text corpus with a chat-completion model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="create a run from a line-delimited JSON corpus")
    _add_common(p)
    p.add_argument("--dataset", help="corpus file (one JSON object per line)")
    p.add_argument("--name", help="run name")
    p.add_argument("--question", action="append", default=[], help="research question (repeatable)")
    p.add_argument("--analysis-kind", choices=["semantic", "latent"], default=None)
    p.add_argument("--topic", help="topical focus")
    p.add_argument("--theme-spec", help="what counts as a theme")
    p.add_argument("--requirement", action="append", default=[], help="initial custom requirement")

    p = sub.add_parser("code", help="generate initial codes for a round")
    _add_common(p)

    p = sub.add_parser("feedback", help="append expert feedback and (by default) re-code")
    _add_common(p)
    p.add_argument("--positive", action="append", default=[], help="aspect to focus on (repeatable)")
    p.add_argument("--negative", action="append", default=[], help="aspect to avoid (repeatable)")
    p.add_argument("--exemplar", action="append", default=[], help="example of a desirable code")
    p.add_argument("--file", dest="feedback_file", help="JSON file with positive/negative/exemplars")
    p.add_argument("--no-rerun", action="store_true", help="do not trigger the next coding round")

    p = sub.add_parser("collate", help="collate a round's codes into candidate themes")
    _add_common(p)

    p = sub.add_parser("merge", help="merge candidate themes into high-level themes")
    _add_common(p)

    p = sub.add_parser("approve-themes", help="approve (optionally edit) the merged theme set")
    _add_common(p)
    p.add_argument("--edits", help="JSON file with an edited theme set")

    p = sub.add_parser("classify", help="assign ranked themes to every data point")
    _add_common(p)
    p.add_argument("--allow-unapproved", action="store_true",
                   help="classify against an unapproved merge result")

    p = sub.add_parser("evaluate", help="recall@k, quality tally, and theme mapping")
    _add_common(p)
    p.add_argument("--out-dir", help="where to write report files (default <run>/eval)")

    p = sub.add_parser("export", help="export codes, themes, assignments, and reports")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("serve", help="start the local review service")
    p.add_argument("--config", help="config file")
    p.add_argument("--root", help="directory holding run directories", default="runs")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--ui", help="directory of built review-client assets to serve at /")

    return parser


def _load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    cfg = cfg.with_overrides(
        run_dir=getattr(args, "run_dir", None),
        dataset=getattr(args, "dataset", None),
        name=getattr(args, "name", None),
        seed=getattr(args, "seed", None),
        k=getattr(args, "k", None),
        parallelism=getattr(args, "parallelism", None),
        sample_size=getattr(args, "sample_size", None),
    )
    return cfg.with_backend_flag(getattr(args, "backend", None))


def _require_run_dir(cfg: RunConfig) -> Path:
    if not cfg.run_dir:
        raise ConfigError("a run directory is required (--run-dir or [run] run_dir)")
    return Path(cfg.run_dir)


def _runner(cfg: RunConfig, store: RunStore, need_backend: bool = True) -> Runner:
    gateway = cfg.build_gateway(audit=store.audit_sink) if need_backend else None
    return Runner(
        store,
        gateway,
        config=cfg.pipeline_config(),
        resources=cfg.load_resources(),
        templates=cfg.load_templates(),
        progress=lambda stage, rnd, done, total: print(
            f"[{stage} r{rnd}] {done}/{total} batches", file=sys.stderr
        ),
    )


def _round(args: argparse.Namespace, store: RunStore) -> int:
    return args.round_ if getattr(args, "round_", None) else store.latest_round()


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    if not cfg.dataset:
        raise ConfigError("ingest needs --dataset (or [run] dataset in the config file)")
    run_dir = _require_run_dir(cfg)
    dataset = load_dataset(cfg.dataset, name=cfg.name)
    questions = args.question or ["What patterns of behavior does the corpus describe?"]
    ctx = AnalysisContext(
        research_questions=tuple(questions),
        analysis_kind=args.analysis_kind or "semantic",
        topic_focus=args.topic or "",
        theme_specification=args.theme_spec or "",
        custom_requirements=tuple(args.requirement),
    )
    store = RunStore.create(run_dir, dataset, ctx, config=cfg.to_dict(), name=cfg.name)
    try:
        lo, hi = dataset.text_length_range()
        print(f"created run {store.run_id}: {len(dataset)} data points, text lengths {lo}..{hi} chars")
    finally:
        store.close()
    return EXIT_OK


def cmd_code(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    with RunStore.open(_require_run_dir(cfg)) as store:
        round_ = _round(args, store)
        codes = _runner(cfg, store).run_initial_coding(round_, cfg.seed)
        print(f"coded {len(codes)} data points in round {round_}")
    return EXIT_OK


def cmd_feedback(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    feedback = Feedback(
        positive=tuple(args.positive),
        negative=tuple(args.negative),
        exemplars=tuple(args.exemplar),
    )
    if args.feedback_file:
        data = json.loads(Path(args.feedback_file).read_text(encoding="utf-8"))
        file_fb = Feedback.from_dict(data)
        feedback = Feedback(
            positive=file_fb.positive + feedback.positive,
            negative=file_fb.negative + feedback.negative,
            exemplars=file_fb.exemplars + feedback.exemplars,
        )
    with RunStore.open(_require_run_dir(cfg)) as store:
        runner = _runner(cfg, store, need_backend=not args.no_rerun)
        new_round = runner.apply_feedback(feedback)
        print(f"feedback recorded; context advanced to round {new_round}")
        if not args.no_rerun:
            codes = runner.run_initial_coding(new_round, cfg.seed)
            print(f"re-coded {len(codes)} data points in round {new_round}")
    return EXIT_OK


def cmd_collate(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    with RunStore.open(_require_run_dir(cfg)) as store:
        round_ = _round(args, store)
        _, themes = _runner(cfg, store).run_code_collation(round_, cfg.seed)
        print(f"collated round {round_} into {len(themes)} candidate themes")
    return EXIT_OK


def cmd_merge(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    with RunStore.open(_require_run_dir(cfg)) as store:
        round_ = _round(args, store)
        theme_set = _runner(cfg, store).run_theme_merge(round_)
        print(f"merged into {len(theme_set.themes)} high-level themes:")
        for theme in theme_set.themes:
            print(f"  - {theme.label} ({len(theme.sub_themes)} sub-themes)")
    return EXIT_OK


def cmd_approve(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    edited = None
    if args.edits:
        edited = ThemeSet.from_dict(json.loads(Path(args.edits).read_text(encoding="utf-8")))
    with RunStore.open(_require_run_dir(cfg)) as store:
        round_ = _round(args, store)
        final = _runner(cfg, store, need_backend=False).approve_themes(round_, theme_set=edited)
        print(f"approved {len(final.themes)} themes for round {round_}")
    return EXIT_OK


def cmd_classify(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    with RunStore.open(_require_run_dir(cfg)) as store:
        round_ = _round(args, store)
        assignments = _runner(cfg, store).run_classification(
            round_, k=cfg.k, parallelism=cfg.parallelism, allow_unapproved=args.allow_unapproved
        )
        print(f"classified {len(assignments)} data points (k={cfg.k})")
    return EXIT_OK


def _evaluation_artifacts(store: RunStore, round_: int, k: int) -> dict[str, str]:
    dataset = store.dataset()
    gold = dataset.gold_labels()
    artifacts: dict[str, str] = {}
    assignments = store.classification_assignments(round_)
    if assignments and gold:
        report = recall_at_k(assignments, gold, k=k)
        artifacts["recall.json"] = report_to_json(report)
        artifacts["recall.txt"] = render_recall_text(report) + "\n"
        matrix, flows = theme_mapping(assignments, gold)
        artifacts["mapping.json"] = report_to_json(matrix)
        artifacts["mapping_flows.csv"] = flows_to_csv(flows)
    annotations = store.annotations(round_)
    if annotations:
        tally = tally_quality(annotations)
        artifacts["quality.json"] = report_to_json(tally)
        artifacts["quality.txt"] = render_tally_text(tally) + "\n"
    return artifacts


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    with RunStore.open(_require_run_dir(cfg), writable=False) as store:
        round_ = _round(args, store)
        artifacts = _evaluation_artifacts(store, round_, cfg.k)
        if not artifacts:
            raise DataError(
                f"nothing to evaluate for round {round_}: need classification outputs plus "
                "gold labels, or quality annotations"
            )
        out_dir = Path(args.out_dir) if args.out_dir else store.run_dir / "eval"
        out_dir.mkdir(parents=True, exist_ok=True)
        for filename, content in artifacts.items():
            (out_dir / f"r{round_}-{filename}").write_text(content, encoding="utf-8")
        for filename in ("recall.txt", "quality.txt"):
            if filename in artifacts:
                print(artifacts[filename])
        print(f"evaluation artifacts written to {out_dir}")
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with RunStore.open(_require_run_dir(cfg), writable=False) as store:
        exported = []
        for round_ in store.stage_rounds("coding"):
            lines = [
                json.dumps(
                    {"id": c.data_point_id, "round": c.round, "code": c.code_text},
                    ensure_ascii=False, sort_keys=True,
                )
                for c in store.initial_codes(round_)
            ]
            path = out / f"codes-r{round_}.jsonl"
            path.write_text("\n".join(lines) + "\n", encoding="utf-8")
            exported.append(path.name)
        for round_ in store.stage_rounds("merge"):
            theme_set = store.merged_theme_set(round_)
            if theme_set:
                path = out / f"themes-r{round_}.json"
                path.write_text(
                    json.dumps(theme_set.to_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8",
                )
                exported.append(path.name)
        for round_ in store.stage_rounds("classification"):
            lines = [
                json.dumps(
                    {"id": a.data_point_id, "themes": list(a.ranked_themes)},
                    ensure_ascii=False, sort_keys=True,
                )
                for a in store.classification_assignments(round_)
            ]
            path = out / f"assignments-r{round_}.jsonl"
            path.write_text("\n".join(lines) + "\n", encoding="utf-8")
            exported.append(path.name)
            for filename, content in _evaluation_artifacts(store, round_, cfg.k).items():
                path = out / f"r{round_}-{filename}"
                path.write_text(content, encoding="utf-8")
                exported.append(path.name)
        if not exported:
            raise DataError("run has no stage outputs to export yet")
        print(f"exported {len(exported)} files to {out}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    default_config = RunConfig.from_file(args.config) if args.config else None
    app = create_app(Path(args.root), default_config=default_config, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


_COMMANDS = {
    "ingest": cmd_ingest,
    "code": cmd_code,
    "feedback": cmd_feedback,
    "collate": cmd_collate,
    "merge": cmd_merge,
    "approve-themes": cmd_approve,
    "classify": cmd_classify,
    "evaluate": cmd_evaluate,
    "export": cmd_export,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (StageValidationError, ApprovalRequiredError, StoreError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ThemekitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
