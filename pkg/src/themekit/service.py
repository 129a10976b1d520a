"""Local HTTP facade over the run store and pipeline.

The service is stateless above the run store: every GET reads committed data,
every mutation appends through the same store (and audit trail) the CLI uses,
and a restart loses nothing. No authentication; this is a localhost tool for
a single reviewing expert.
"""

from __future__ import annotations

import threading
import time
from pathlib import Path
from typing import Any, Literal

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .config import RunConfig
from .errors import (
    ApprovalRequiredError,
    BackendError,
    ConfigError,
    DataError,
    StageValidationError,
    StoreError,
    StoreLockedError,
    ThemekitError,
)
from .evaluation import recall_at_k, tally_quality, theme_mapping
from .model import AnalysisContext, QualityAnnotation, ThemeSet, load_dataset
from .pipeline import Feedback, Runner
from .store import RunStore, list_runs

STAGE_COMMANDS = ("code", "collate", "merge", "classify")
_STAGE_FILES = {"code": "coding", "collate": "collation", "merge": "merge", "classify": "classification"}


class ApiError(Exception):
    """Error carried to the client: machine code, human message, locus."""

    def __init__(self, status: int, code: str, message: str,
                 stage: str | None = None, batch_index: int | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.stage = stage
        self.batch_index = batch_index

    def body(self) -> dict:
        error: dict[str, Any] = {"code": self.code, "message": self.message}
        if self.stage is not None:
            error["stage"] = self.stage
        if self.batch_index is not None:
            error["batch_index"] = self.batch_index
        return {"error": error}


def _api_error_from(exc: Exception) -> ApiError:
    if isinstance(exc, ApiError):
        return exc
    if isinstance(exc, ApprovalRequiredError):
        return ApiError(409, "THEMES_UNAPPROVED", str(exc))
    if isinstance(exc, StoreLockedError):
        return ApiError(409, "STAGE_RUNNING", str(exc))
    if isinstance(exc, StageValidationError):
        return ApiError(422, "STAGE_VALIDATION", str(exc), stage=exc.stage, batch_index=exc.batch_index)
    if isinstance(exc, (DataError, ConfigError)):
        return ApiError(422, "INVALID_INPUT", str(exc))
    if isinstance(exc, BackendError):
        return ApiError(502, "BACKEND_FAILURE", str(exc))
    if isinstance(exc, StoreError):
        return ApiError(404, "RUN_STATE", str(exc))
    if isinstance(exc, ThemekitError):
        return ApiError(500, "INTERNAL", str(exc))
    return ApiError(500, "INTERNAL", f"{type(exc).__name__}: {exc}")


class CreateRunBody(BaseModel):
    name: str
    dataset_path: str
    research_questions: list[str] = Field(default_factory=list)
    analysis_kind: Literal["semantic", "latent"] = "semantic"
    topic_focus: str = ""
    theme_specification: str = ""
    custom_requirements: list[str] = Field(default_factory=list)
    config: dict[str, Any] = Field(default_factory=dict)


class FeedbackBody(BaseModel):
    positive: list[str] = Field(default_factory=list)
    negative: list[str] = Field(default_factory=list)
    exemplars: list[str] = Field(default_factory=list)
    rerun: bool = False
    seed: int | None = None


class AnnotationItem(BaseModel):
    data_point_id: str
    round: int
    verdict: Literal["not_how", "not_what", "ok"]


class AnnotationsBody(BaseModel):
    items: list[AnnotationItem]


class ThemeBody(BaseModel):
    label: str
    sub_themes: list[str]


class ApproveBody(BaseModel):
    round: int | None = None
    themes: list[ThemeBody] | None = None


class StageBody(BaseModel):
    round: int | None = None
    seed: int | None = None
    k: int | None = None
    parallelism: int | None = None
    allow_unapproved: bool = False


class ActiveStage:
    def __init__(self, stage: str, round_: int):
        self.stage = stage
        self.round = round_
        self.done = 0
        self.total = 0
        self.error: str | None = None
        self.finished = False


class StageManager:
    """At most one active stage per run; stages run on daemon threads."""

    def __init__(self) -> None:
        self._active: dict[str, ActiveStage] = {}
        self._lock = threading.Lock()

    def get(self, run_id: str) -> ActiveStage | None:
        with self._lock:
            active = self._active.get(run_id)
            if active and active.finished:
                return active
            return active

    def running(self, run_id: str) -> ActiveStage | None:
        with self._lock:
            active = self._active.get(run_id)
            return active if active and not active.finished else None

    def start(self, run_id: str, stage: str, round_: int, work) -> ActiveStage:
        with self._lock:
            current = self._active.get(run_id)
            if current and not current.finished:
                raise ApiError(
                    409, "STAGE_RUNNING",
                    f"stage {current.stage} (round {current.round}) is already running for this run",
                )
            active = ActiveStage(stage, round_)
            self._active[run_id] = active

        def runner() -> None:
            try:
                work(active)
            except Exception as exc:  # surfaced via progress, run is resumable
                active.error = f"{type(exc).__name__}: {exc}"
            finally:
                active.finished = True

        threading.Thread(target=runner, daemon=True).start()
        return active


def _run_config(store: RunStore) -> RunConfig:
    return RunConfig.from_dict(store.manifest.get("config", {}))


def create_app(
    root: str | Path,
    default_config: RunConfig | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    """Build the review service over a directory of run directories.

    ``ui_dir`` (when given and existing) is served as static files at ``/``,
    which is how the browser review client ships.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    app = FastAPI(title="themekit review service")
    manager = StageManager()
    base_config = default_config or RunConfig()

    def open_run(run_id: str, writable: bool = False) -> RunStore:
        run_dir = root / run_id
        if not (run_dir / "manifest.json").exists():
            raise ApiError(404, "UNKNOWN_RUN", f"no run named {run_id!r}")
        return RunStore.open(run_dir, writable=writable)

    @app.exception_handler(ApiError)
    async def _handle_api_error(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.body())

    @app.exception_handler(ThemekitError)
    async def _handle_domain_error(_request: Request, exc: ThemekitError):
        api = _api_error_from(exc)
        return JSONResponse(status_code=api.status, content=api.body())

    @app.exception_handler(RequestValidationError)
    async def _handle_validation(_request: Request, exc: RequestValidationError):
        api = ApiError(422, "INVALID_PAYLOAD", str(exc.errors()[:3]))
        return JSONResponse(status_code=api.status, content=api.body())

    # -- runs -----------------------------------------------------------------

    @app.get("/api/runs")
    def get_runs() -> dict:
        return {"runs": [r.to_dict() for r in list_runs(root)]}

    @app.post("/api/runs", status_code=201)
    def post_run(body: CreateRunBody) -> dict:
        run_dir = root / body.name
        if (run_dir / "manifest.json").exists():
            raise ApiError(409, "RUN_EXISTS", f"run {body.name!r} already exists")
        dataset = load_dataset(body.dataset_path, name=body.name)
        questions = body.research_questions or ["What patterns of behavior does the corpus describe?"]
        ctx = AnalysisContext(
            research_questions=tuple(questions),
            analysis_kind=body.analysis_kind,
            topic_focus=body.topic_focus,
            theme_specification=body.theme_specification,
            custom_requirements=tuple(body.custom_requirements),
        )
        config = dict(base_config.to_dict())
        config.update(body.config)
        store = RunStore.create(run_dir, dataset, ctx, config=config, name=body.name)
        try:
            return store.record().to_dict()
        finally:
            store.close()

    @app.get("/api/runs/{run_id}")
    def get_run(run_id: str) -> dict:
        store = open_run(run_id)
        record = store.record().to_dict()
        record["contexts"] = {
            str(rnd): ctx.to_dict() for rnd, ctx in sorted(store.context_rounds().items())
        }
        active = manager.get(run_id)
        record["active_stage"] = (
            {
                "stage": active.stage,
                "round": active.round,
                "done": active.done,
                "total": active.total,
                "error": active.error,
                "finished": active.finished,
            }
            if active
            else None
        )
        return record

    # -- codes ------------------------------------------------------------------

    @app.get("/api/runs/{run_id}/codes")
    def get_codes(
        run_id: str,
        round: int | None = None,
        offset: int = 0,
        limit: int = 100,
        q: str = "",
        include_text: bool = False,
    ) -> dict:
        store = open_run(run_id)
        rounds = store.stage_rounds("coding")
        if round is None:
            round = rounds[-1] if rounds else 1
        codes = store.initial_codes(round)
        if q:
            needle = q.lower()
            codes = [c for c in codes if needle in c.code_text.lower() or needle in c.data_point_id.lower()]
        total = len(codes)
        window = codes[max(offset, 0): max(offset, 0) + max(min(limit, 1000), 1)]
        texts = {p.id: p.text for p in store.dataset()} if include_text else {}
        return {
            "round": round,
            "rounds": rounds,
            "total": total,
            "offset": offset,
            "limit": limit,
            "items": [
                {
                    "id": c.data_point_id,
                    "code": c.code_text,
                    "round": c.round,
                    **({"text": texts.get(c.data_point_id, "")} if include_text else {}),
                }
                for c in window
            ],
        }

    @app.get("/api/runs/{run_id}/assignments")
    def get_assignments(
        run_id: str,
        round: int | None = None,
        offset: int = 0,
        limit: int = 100,
        q: str = "",
    ) -> dict:
        store = open_run(run_id)
        rounds = store.stage_rounds("classification")
        if round is None:
            round = rounds[-1] if rounds else 1
        assignments = store.classification_assignments(round)
        gold = store.dataset().gold_labels()
        if q:
            needle = q.lower()
            assignments = [
                a for a in assignments
                if needle in a.data_point_id.lower()
                or any(needle in t.lower() for t in a.ranked_themes)
            ]
        total = len(assignments)
        window = assignments[max(offset, 0): max(offset, 0) + max(min(limit, 1000), 1)]
        return {
            "round": round,
            "rounds": rounds,
            "total": total,
            "offset": offset,
            "limit": limit,
            "items": [
                {
                    "id": a.data_point_id,
                    "themes": list(a.ranked_themes),
                    **({"gold_theme": gold[a.data_point_id]} if a.data_point_id in gold else {}),
                }
                for a in window
            ],
        }

    # -- feedback ------------------------------------------------------------------

    @app.post("/api/runs/{run_id}/feedback")
    def post_feedback(run_id: str, body: FeedbackBody) -> dict:
        if manager.running(run_id):
            raise ApiError(409, "STAGE_RUNNING", "cannot apply feedback while a stage is running")
        with open_run(run_id, writable=True) as store:
            cfg = _run_config(store)
            runner = Runner(store, None, config=cfg.pipeline_config(),
                            resources=cfg.load_resources(), templates=cfg.load_templates())
            new_round = runner.apply_feedback(
                Feedback(
                    positive=tuple(body.positive),
                    negative=tuple(body.negative),
                    exemplars=tuple(body.exemplars),
                )
            )
        result = {"round": new_round, "rerun_started": False}
        if body.rerun:
            _start_stage(run_id, "code", StageBody(round=new_round, seed=body.seed))
            result["rerun_started"] = True
        return result

    # -- annotations ------------------------------------------------------------------

    @app.post("/api/runs/{run_id}/annotations")
    def post_annotations(run_id: str, body: AnnotationsBody) -> dict:
        if manager.running(run_id):
            raise ApiError(409, "STAGE_RUNNING", "cannot annotate while a stage is running")
        if not body.items:
            raise ApiError(422, "INVALID_PAYLOAD", "annotation batch is empty")
        with open_run(run_id, writable=True) as store:
            count = store.append_annotations(
                QualityAnnotation(item.data_point_id, item.round, item.verdict)
                for item in body.items
            )
        return {"stored": count}

    @app.get("/api/runs/{run_id}/annotations")
    def get_annotations(run_id: str, round: int | None = None) -> dict:
        store = open_run(run_id)
        annotations = store.annotations(round)
        tally = tally_quality(annotations)
        return {
            "round": round,
            "items": [
                {"data_point_id": a.data_point_id, "round": a.round, "verdict": a.verdict.value}
                for a in annotations
            ],
            "tally": tally.to_dict(),
        }

    # -- themes ----------------------------------------------------------------------

    @app.get("/api/runs/{run_id}/themes")
    def get_themes(run_id: str, round: int | None = None) -> dict:
        store = open_run(run_id)
        rounds = store.stage_rounds("merge") or store.stage_rounds("collation")
        if round is None:
            round = rounds[-1] if rounds else store.latest_round()
        merged = store.merged_theme_set(round)
        approved = store.approved_themes(round)
        candidates = [
            {"label": t.label, "members": sorted(t.member_ids)}
            for t in store.potential_themes(round)
        ]
        return {
            "round": round,
            "merged": merged.to_dict() if merged else None,
            "approved": approved.to_dict() if approved else None,
            "candidates": candidates,
        }

    @app.post("/api/runs/{run_id}/themes/approve")
    def post_approve(run_id: str, body: ApproveBody) -> dict:
        if manager.running(run_id):
            raise ApiError(409, "STAGE_RUNNING", "cannot approve while a stage is running")
        with open_run(run_id, writable=True) as store:
            round_ = body.round or (store.stage_rounds("merge") or [store.latest_round()])[-1]
            cfg = _run_config(store)
            runner = Runner(store, None, config=cfg.pipeline_config(),
                            resources=cfg.load_resources(), templates=cfg.load_templates())
            edited = None
            if body.themes is not None:
                edited = ThemeSet.from_dict(
                    {"themes": [{"label": t.label, "sub_themes": t.sub_themes} for t in body.themes]}
                )
            final = runner.approve_themes(round_, theme_set=edited)
        return {"round": round_, "approved": final.to_dict()}

    # -- stages -------------------------------------------------------------------------

    def _start_stage(run_id: str, stage: str, body: StageBody) -> dict:
        if stage not in STAGE_COMMANDS:
            raise ApiError(404, "UNKNOWN_STAGE", f"unknown stage {stage!r}")
        store = open_run(run_id, writable=True)
        try:
            cfg = _run_config(store)
            round_ = body.round or store.latest_round()
            if stage == "classify" and not body.allow_unapproved:
                if store.approved_themes(round_) is None:
                    raise ApiError(
                        409, "THEMES_UNAPPROVED",
                        f"theme set for round {round_} must be approved before classification",
                    )
        except BaseException:
            store.close()
            raise

        def work(active: ActiveStage) -> None:
            def progress(_stage: str, _round: int, done: int, total: int) -> None:
                active.done, active.total = done, total

            try:
                runner = Runner(store, cfg.build_gateway(audit=store.audit_sink),
                                config=cfg.pipeline_config(), resources=cfg.load_resources(),
                                templates=cfg.load_templates(), progress=progress)
                if stage == "code":
                    runner.run_initial_coding(round_, body.seed)
                elif stage == "collate":
                    runner.run_code_collation(round_, body.seed)
                elif stage == "merge":
                    runner.run_theme_merge(round_)
                elif stage == "classify":
                    runner.run_classification(
                        round_, k=body.k, parallelism=body.parallelism,
                        allow_unapproved=body.allow_unapproved,
                    )
            finally:
                store.close()

        manager.start(run_id, stage, round_, work)
        return {"started": True, "stage": stage, "round": round_}

    @app.post("/api/runs/{run_id}/stages/{stage}", status_code=202)
    def post_stage(run_id: str, stage: str, body: StageBody | None = None) -> dict:
        return _start_stage(run_id, stage, body or StageBody())

    # -- progress -------------------------------------------------------------------------

    @app.get("/api/runs/{run_id}/progress")
    def get_progress(run_id: str, cursor: int = -1, timeout: float = 25.0) -> dict:
        deadline = time.monotonic() + min(max(timeout, 0.0), 30.0)
        while True:
            store = open_run(run_id)
            version = store.progress_version()
            active = manager.get(run_id)
            if version > cursor or time.monotonic() >= deadline or (active and active.finished):
                stages = [
                    {"stage": s.stage, "round": s.round, "batches_done": s.next_batch_index}
                    for s in store.stage_states()
                ]
                return {
                    "version": version,
                    "stages": stages,
                    "active": (
                        {
                            "stage": active.stage,
                            "round": active.round,
                            "done": active.done,
                            "total": active.total,
                            "error": active.error,
                            "finished": active.finished,
                        }
                        if active
                        else None
                    ),
                }
            time.sleep(0.1)

    # -- evaluation ---------------------------------------------------------------------------

    @app.get("/api/runs/{run_id}/evaluation")
    def get_evaluation(run_id: str, k: int = 3, round: int | None = None) -> dict:
        store = open_run(run_id)
        rounds = store.stage_rounds("classification")
        if round is None:
            round = rounds[-1] if rounds else store.latest_round()
        result: dict[str, Any] = {"round": round, "k": k, "recall": None, "tally": None}
        annotations = store.annotations(round)
        if annotations:
            result["tally"] = tally_quality(annotations).to_dict()
        assignments = store.classification_assignments(round)
        gold = store.dataset().gold_labels()
        if assignments and gold:
            result["recall"] = recall_at_k(assignments, gold, k=k).to_dict()
        elif assignments and not gold:
            result["recall_unavailable"] = "dataset carries no gold labels"
        return result

    @app.get("/api/runs/{run_id}/mapping")
    def get_mapping(run_id: str, round: int | None = None) -> dict:
        store = open_run(run_id)
        rounds = store.stage_rounds("classification")
        if round is None:
            if not rounds:
                raise ApiError(422, "INVALID_INPUT", "run has no classification outputs yet")
            round = rounds[-1]
        assignments = store.classification_assignments(round)
        gold = store.dataset().gold_labels()
        if not assignments:
            raise ApiError(422, "INVALID_INPUT", f"round {round} has no classification outputs")
        if not gold:
            raise ApiError(422, "INVALID_INPUT", "dataset carries no gold labels to map against")
        matrix, flows = theme_mapping(assignments, gold)
        return {
            "round": round,
            "matrix": matrix.to_dict(),
            "flows": [{"source": s, "target": t, "weight": w} for s, t, w in flows],
        }

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
