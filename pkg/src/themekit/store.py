"""Durable, append-only, resumable persistence for analysis runs.

One directory per run, plain files throughout, so an expert can inspect (and
diff) everything that happened:

    manifest.json        run identity, dataset digest, config snapshot
    dataset.jsonl        the ingested corpus, copied at creation
    context.jsonl        one analysis-context snapshot per round
    approvals.jsonl      theme-set approvals (last entry per round wins)
    annotations.jsonl    quality verdicts (last entry per (id, round) wins)
    audit.jsonl          every provider interaction, sequence-numbered
    stages/<stage>-r<round>.jsonl   one line per committed batch

Stage, context, approval, and annotation files carry no timestamps, so two
runs of the same scripted scenario are byte-identical; only manifest.json
(created_at) and audit.jsonl (ts) record wall-clock time.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from filelock import FileLock, Timeout

from .errors import DataError, DigestMismatchError, StoreError, StoreLockedError
from .model import (
    AnalysisContext,
    Dataset,
    InitialCode,
    PotentialTheme,
    QualityAnnotation,
    ThemeAssignment,
    ThemeSet,
    dump_dataset,
    parse_dataset,
)

STAGE_NAMES = ("coding", "collation", "merge", "classification")
_MANIFEST_VERSION = 1


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def _append_line(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as fh:
        fh.write(_dumps(obj) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def _read_lines(path: Path) -> list[dict]:
    """Read a JSON-lines file, tolerating a truncated final line.

    A torn write can only affect the last line (appends are sequential); a
    malformed line anywhere else means real corruption.
    """
    if not path.exists():
        return []
    rows: list[dict] = []
    raw_lines = path.read_text(encoding="utf-8").splitlines()
    for i, line in enumerate(raw_lines):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            if i == len(raw_lines) - 1:
                break
            raise StoreError(f"corrupted store file {path.name} at line {i + 1}") from exc
    return rows


@dataclass(frozen=True)
class StageState:
    """Progress of one (stage, round): batches [0, next_batch_index) committed."""

    stage: str
    round: int
    next_batch_index: int


@dataclass(frozen=True)
class RunRecord:
    """Snapshot view of a run for listings and the review service."""

    run_id: str
    name: str
    created_at: float
    dataset_digest: str
    n_points: int
    rounds: tuple[int, ...]
    stages: tuple[StageState, ...]
    approved_rounds: tuple[int, ...]
    last_seq: int

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "name": self.name,
            "created_at": self.created_at,
            "dataset_digest": self.dataset_digest,
            "n_points": self.n_points,
            "rounds": list(self.rounds),
            "stages": [
                {"stage": s.stage, "round": s.round, "next_batch_index": s.next_batch_index}
                for s in self.stages
            ],
            "approved_rounds": list(self.approved_rounds),
            "last_seq": self.last_seq,
        }


class StoreAuditSink:
    """Audit receiver bound to a run directory; assigns sequence numbers."""

    def __init__(self, store: "RunStore"):
        self._store = store

    def emit(self, event: dict) -> None:
        self._store._append_audit(event)


class RunStore:
    """Handle on one run directory. At most one writer at a time (advisory
    lock); any number of readers may open committed data."""

    def __init__(self, run_dir: Path, writable: bool, lock: FileLock | None):
        self.run_dir = run_dir
        self.writable = writable
        self._lock = lock
        self._write_mutex = threading.Lock()
        self._manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
        self._dataset: Dataset | None = None
        self._next_seq = self._scan_last_seq() + 1

    # -- construction ------------------------------------------------------

    @classmethod
    def create(
        cls,
        run_dir: str | Path,
        dataset: Dataset,
        context: AnalysisContext,
        config: Mapping | None = None,
        name: str | None = None,
    ) -> "RunStore":
        run_dir = Path(run_dir)
        if (run_dir / "manifest.json").exists():
            raise StoreError(f"run directory {run_dir} already holds a run")
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "stages").mkdir(exist_ok=True)
        lock = cls._acquire_lock(run_dir)
        try:
            dataset_text = dump_dataset(dataset)
            (run_dir / "dataset.jsonl").write_text(dataset_text, encoding="utf-8")
            digest = hashlib.sha256(dataset_text.encode("utf-8")).hexdigest()
            manifest = {
                "format_version": _MANIFEST_VERSION,
                "run_id": run_dir.name,
                "name": name or dataset.name,
                "created_at": time.time(),
                "dataset_digest": digest,
                "config": dict(config or {}),
            }
            (run_dir / "manifest.json").write_text(
                json.dumps(manifest, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
                encoding="utf-8",
            )
            store = cls(run_dir, writable=True, lock=lock)
        except BaseException:
            lock.release()
            raise
        store.append_context(1, context)
        return store

    @classmethod
    def open(cls, run_dir: str | Path, writable: bool = True) -> "RunStore":
        run_dir = Path(run_dir)
        if not (run_dir / "manifest.json").exists():
            raise StoreError(f"{run_dir} is not a run directory (no manifest.json)")
        lock = cls._acquire_lock(run_dir) if writable else None
        try:
            store = cls(run_dir, writable=writable, lock=lock)
            store._verify_digest()
        except BaseException:
            if lock is not None:
                lock.release()
            raise
        return store

    @classmethod
    def open_or_create(
        cls,
        run_dir: str | Path,
        dataset: Dataset | None = None,
        context: AnalysisContext | None = None,
        config: Mapping | None = None,
        name: str | None = None,
    ) -> "RunStore":
        run_dir = Path(run_dir)
        if (run_dir / "manifest.json").exists():
            return cls.open(run_dir)
        if dataset is None or context is None:
            raise StoreError(f"{run_dir} holds no run yet; dataset and context are required to create one")
        return cls.create(run_dir, dataset, context, config=config, name=name)

    @staticmethod
    def _acquire_lock(run_dir: Path) -> FileLock:
        # thread_local=False: the lock may be acquired by a request thread and
        # released by the stage worker that inherits the store handle.
        lock = FileLock(str(run_dir / ".lock"), thread_local=False)
        try:
            lock.acquire(timeout=0)
        except Timeout as exc:
            raise StoreLockedError(f"another writer holds the lock on {run_dir}") from exc
        return lock

    def close(self) -> None:
        if self._lock is not None:
            self._lock.release()
            self._lock = None

    def __enter__(self) -> "RunStore":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- identity and dataset ----------------------------------------------

    @property
    def run_id(self) -> str:
        return self._manifest["run_id"]

    @property
    def manifest(self) -> dict:
        return dict(self._manifest)

    def _verify_digest(self) -> None:
        text = (self.run_dir / "dataset.jsonl").read_text(encoding="utf-8")
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        if digest != self._manifest["dataset_digest"]:
            raise DigestMismatchError(
                f"dataset.jsonl in {self.run_dir} does not match the digest recorded at creation"
            )

    def dataset(self) -> Dataset:
        if self._dataset is None:
            with (self.run_dir / "dataset.jsonl").open("r", encoding="utf-8") as fh:
                self._dataset = parse_dataset(fh, name=self._manifest.get("name", "dataset"))
        return self._dataset

    # -- context snapshots ---------------------------------------------------

    def context_rounds(self) -> dict[int, AnalysisContext]:
        rows = _read_lines(self.run_dir / "context.jsonl")
        return {int(r["round"]): AnalysisContext.from_dict(r["context"]) for r in rows}

    def latest_round(self) -> int:
        rounds = self.context_rounds()
        if not rounds:
            raise StoreError("run has no context snapshots")
        return max(rounds)

    def context(self, round_: int | None = None) -> AnalysisContext:
        rounds = self.context_rounds()
        if not rounds:
            raise StoreError("run has no context snapshots")
        if round_ is None:
            round_ = max(rounds)
        if round_ not in rounds:
            raise StoreError(f"no context snapshot for round {round_}")
        return rounds[round_]

    def append_context(self, round_: int, ctx: AnalysisContext) -> None:
        self._require_writable()
        rounds = self.context_rounds()
        if rounds:
            expected = max(rounds) + 1
            if round_ != expected:
                raise StoreError(f"next context round must be {expected}, got {round_}")
            if not ctx.extends(rounds[max(rounds)]):
                raise StoreError(
                    "context snapshots must extend the previous round's custom requirements"
                )
        elif round_ != 1:
            raise StoreError("first context snapshot must be round 1")
        _append_line(self.run_dir / "context.jsonl", {"round": round_, "context": ctx.to_dict()})

    # -- stage outputs -------------------------------------------------------

    def _stage_path(self, stage: str, round_: int) -> Path:
        if stage not in STAGE_NAMES:
            raise StoreError(f"unknown stage {stage!r}")
        return self.run_dir / "stages" / f"{stage}-r{round_}.jsonl"

    def stage_batches(self, stage: str, round_: int) -> list[dict]:
        rows = _read_lines(self._stage_path(stage, round_))
        for i, row in enumerate(rows):
            if int(row.get("batch", -1)) != i:
                raise StoreError(
                    f"stage file {stage}-r{round_} is not contiguous at position {i}"
                )
        return rows

    def resume_point(self, stage: str, round_: int) -> int:
        """Index of the first batch lacking a committed output."""
        return len(self.stage_batches(stage, round_))

    def commit_batch(self, stage: str, round_: int, batch_index: int, payload: Mapping) -> None:
        """Atomically append one batch's outputs; commits must be in order."""
        self._require_writable()
        with self._write_mutex:
            expected = self.resume_point(stage, round_)
            if batch_index != expected:
                raise StoreError(
                    f"out-of-order commit for {stage} round {round_}: "
                    f"expected batch {expected}, got {batch_index}"
                )
            row = {"batch": batch_index}
            row.update(payload)
            _append_line(self._stage_path(stage, round_), row)

    def stage_rounds(self, stage: str) -> list[int]:
        stage_dir = self.run_dir / "stages"
        if not stage_dir.is_dir():
            return []
        rounds = []
        for path in stage_dir.glob(f"{stage}-r*.jsonl"):
            try:
                rounds.append(int(path.stem.split("-r", 1)[1]))
            except ValueError:
                continue
        return sorted(rounds)

    # -- typed readers over stage files --------------------------------------

    def initial_codes(self, round_: int) -> list[InitialCode]:
        codes = []
        for row in self.stage_batches("coding", round_):
            for entry in row["codes"]:
                codes.append(InitialCode(entry["id"], entry["code"], round_))
        return codes

    def collation(self, round_: int) -> dict[str, str]:
        mapping: dict[str, str] = {}
        for row in self.stage_batches("collation", round_):
            for entry in row["themes"]:
                mapping[entry["id"]] = entry["theme"]
        return mapping

    def potential_themes(self, round_: int) -> list[PotentialTheme]:
        groups: dict[str, set[str]] = {}
        for point_id, label in self.collation(round_).items():
            groups.setdefault(label, set()).add(point_id)
        return [PotentialTheme(label, frozenset(ids)) for label, ids in sorted(groups.items())]

    def merged_theme_set(self, round_: int) -> ThemeSet | None:
        rows = self.stage_batches("merge", round_)
        if not rows:
            return None
        return ThemeSet.from_dict(rows[0])

    def classification_assignments(self, round_: int) -> list[ThemeAssignment]:
        assignments = []
        for row in self.stage_batches("classification", round_):
            for entry in row["assignments"]:
                assignments.append(ThemeAssignment(entry["id"], tuple(entry["themes"])))
        return assignments

    # -- approvals -------------------------------------------------------------

    def record_approval(
        self, round_: int, theme_set: ThemeSet, edited: bool = False, auto: bool = False
    ) -> None:
        self._require_writable()
        _append_line(
            self.run_dir / "approvals.jsonl",
            {"round": round_, "themes": theme_set.to_dict()["themes"], "edited": edited, "auto": auto},
        )

    def approved_themes(self, round_: int) -> ThemeSet | None:
        latest = None
        for row in _read_lines(self.run_dir / "approvals.jsonl"):
            if int(row["round"]) == round_:
                latest = row
        if latest is None:
            return None
        return ThemeSet.from_dict(latest)

    def approved_rounds(self) -> list[int]:
        return sorted({int(r["round"]) for r in _read_lines(self.run_dir / "approvals.jsonl")})

    # -- annotations -------------------------------------------------------------

    def append_annotations(self, annotations: Iterable[QualityAnnotation]) -> int:
        self._require_writable()
        count = 0
        dataset_ids = set(self.dataset().ids())
        for ann in annotations:
            if ann.data_point_id not in dataset_ids:
                raise DataError(f"annotation references unknown data point {ann.data_point_id!r}")
            _append_line(
                self.run_dir / "annotations.jsonl",
                {"data_point_id": ann.data_point_id, "round": ann.round, "verdict": ann.verdict.value},
            )
            count += 1
        return count

    def annotations(self, round_: int | None = None) -> list[QualityAnnotation]:
        """Committed annotations with a last-wins view per (id, round)."""
        latest: dict[tuple[str, int], QualityAnnotation] = {}
        for row in _read_lines(self.run_dir / "annotations.jsonl"):
            ann = QualityAnnotation(row["data_point_id"], int(row["round"]), row["verdict"])
            latest[(ann.data_point_id, ann.round)] = ann
        selected = [
            ann for key, ann in sorted(latest.items()) if round_ is None or key[1] == round_
        ]
        return selected

    # -- audit log ---------------------------------------------------------------

    def _scan_last_seq(self) -> int:
        rows = _read_lines(self.run_dir / "audit.jsonl")
        return max((int(r.get("seq", 0)) for r in rows), default=0)

    def _append_audit(self, event: dict) -> None:
        self._require_writable()
        with self._write_mutex:
            event = dict(event)
            event["seq"] = self._next_seq
            self._next_seq += 1
            _append_line(self.run_dir / "audit.jsonl", event)

    @property
    def audit_sink(self) -> StoreAuditSink:
        return StoreAuditSink(self)

    def audit_events(self) -> list[dict]:
        return _read_lines(self.run_dir / "audit.jsonl")

    # -- snapshots ----------------------------------------------------------------

    def progress_version(self) -> int:
        """Monotone counter over all append-only files; long-poll cursor."""
        counts = len(_read_lines(self.run_dir / "audit.jsonl"))
        counts += len(_read_lines(self.run_dir / "context.jsonl"))
        counts += len(_read_lines(self.run_dir / "approvals.jsonl"))
        counts += len(_read_lines(self.run_dir / "annotations.jsonl"))
        stage_dir = self.run_dir / "stages"
        if stage_dir.is_dir():
            for path in sorted(stage_dir.glob("*.jsonl")):
                counts += len(_read_lines(path))
        return counts

    def stage_states(self) -> list[StageState]:
        states = []
        for stage in STAGE_NAMES:
            for round_ in self.stage_rounds(stage):
                states.append(StageState(stage, round_, self.resume_point(stage, round_)))
        return states

    def record(self) -> RunRecord:
        return RunRecord(
            run_id=self.run_id,
            name=self._manifest.get("name", self.run_id),
            created_at=self._manifest.get("created_at", 0.0),
            dataset_digest=self._manifest["dataset_digest"],
            n_points=len(self.dataset()),
            rounds=tuple(sorted(self.context_rounds())),
            stages=tuple(self.stage_states()),
            approved_rounds=tuple(self.approved_rounds()),
            last_seq=self._scan_last_seq(),
        )

    def _require_writable(self) -> None:
        if not self.writable:
            raise StoreError("store was opened read-only")


def open_or_create(
    run_dir: str | Path,
    dataset: Dataset | None = None,
    context: AnalysisContext | None = None,
    config: Mapping | None = None,
    name: str | None = None,
) -> RunStore:
    """Module-level convenience mirroring RunStore.open_or_create."""
    return RunStore.open_or_create(run_dir, dataset=dataset, context=context, config=config, name=name)


def list_runs(root: str | Path) -> list[RunRecord]:
    """Run summaries for every run directory directly under ``root``."""
    root = Path(root)
    records = []
    if not root.is_dir():
        return records
    for child in sorted(root.iterdir()):
        if (child / "manifest.json").exists():
            store = RunStore.open(child, writable=False)
            records.append(store.record())
    return records
