"""Core vocabulary: data points, analysis context, codes, themes, assignments.

Every type here is an immutable value after construction, so instances can be
shared freely between threads and stages.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import DataError


def normalize_label(label: str) -> str:
    """Canonical form used when comparing theme labels.

    Unicode NFC, casefold, and whitespace collapsing absorb the label jitter a
    model introduces between calls ("Theft In A Shop " vs "theft in a shop").
    """
    return " ".join(unicodedata.normalize("NFC", label).casefold().split())


@dataclass(frozen=True)
class DataPoint:
    """One unit of analysis (a facts description).

    ``gold_theme`` exists for evaluation only; prompt assembly never receives
    it (builders are handed bare (id, text) pairs).
    """

    id: str
    text: str
    gold_theme: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise DataError("data point id must be non-empty")
        if "\n" in self.id or "\r" in self.id:
            raise DataError(f"data point id {self.id!r} contains a line break")
        if not self.text:
            raise DataError(f"data point {self.id!r} has empty text")


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of data points with pairwise-distinct ids."""

    points: tuple[DataPoint, ...]
    name: str = "dataset"

    def __post_init__(self) -> None:
        if not self.points:
            raise DataError("dataset must contain at least one data point")
        seen: set[str] = set()
        for p in self.points:
            if p.id in seen:
                raise DataError(f"duplicate data point id {p.id!r}")
            seen.add(p.id)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[DataPoint]:
        return iter(self.points)

    def ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.points)

    def point(self, point_id: str) -> DataPoint:
        for p in self.points:
            if p.id == point_id:
                return p
        raise KeyError(point_id)

    def gold_labels(self) -> dict[str, str]:
        """Mapping of id to gold theme for the labeled subset (may be empty)."""
        return {p.id: p.gold_theme for p in self.points if p.gold_theme is not None}

    def text_length_range(self) -> tuple[int, int]:
        """Character-length extrema over the corpus (derived, not stored)."""
        lengths = [len(p.text) for p in self.points]
        return min(lengths), max(lengths)


def parse_dataset(lines: Iterable[str], name: str = "dataset") -> Dataset:
    """Build a Dataset from line-delimited JSON records.

    Each non-blank line must be one JSON object with fields ``id`` (string),
    ``text`` (string), and optional ``gold_theme`` (string). Input order is
    preserved. Errors carry the 1-based line number.
    """
    points: list[DataPoint] = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"line {lineno}: malformed JSON record ({exc.msg})") from exc
        if not isinstance(record, dict):
            raise DataError(f"line {lineno}: record must be a JSON object")
        point_id = record.get("id")
        text = record.get("text")
        if not isinstance(point_id, str) or not point_id:
            raise DataError(f"line {lineno}: missing or empty 'id' field")
        if not isinstance(text, str) or not text:
            raise DataError(f"line {lineno}: missing or empty 'text' field")
        gold = record.get("gold_theme")
        if gold is not None and not isinstance(gold, str):
            raise DataError(f"line {lineno}: 'gold_theme' must be a string when present")
        if point_id in seen:
            raise DataError(
                f"duplicate id {point_id!r} at line {lineno} (first seen at line {seen[point_id]})"
            )
        seen[point_id] = lineno
        try:
            points.append(DataPoint(id=point_id, text=text, gold_theme=gold))
        except DataError as exc:
            raise DataError(f"line {lineno}: {exc}") from exc
    if not points:
        raise DataError("empty dataset stream")
    return Dataset(points=tuple(points), name=name)


def load_dataset(path: str | Path, name: str | None = None) -> Dataset:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fh:
            return parse_dataset(fh, name=name or path.stem)
    except OSError as exc:
        raise DataError(f"cannot read dataset file {path}: {exc}") from exc


def dump_dataset(dataset: Dataset) -> str:
    """Serialize back to the line-delimited ingestion format."""
    out = []
    for p in dataset.points:
        record: dict[str, str] = {"id": p.id, "text": p.text}
        if p.gold_theme is not None:
            record["gold_theme"] = p.gold_theme
        out.append(json.dumps(record, ensure_ascii=False, sort_keys=True))
    return "\n".join(out) + "\n"


_ANALYSIS_KINDS = ("semantic", "latent")


@dataclass(frozen=True)
class AnalysisContext:
    """Context-specific resources steering one analysis.

    ``custom_requirements`` is append-only across a run: expert feedback adds
    entries and never rewrites earlier ones.
    """

    research_questions: tuple[str, ...]
    analysis_kind: str = "semantic"
    topic_focus: str = ""
    theme_specification: str = ""
    custom_requirements: tuple[str, ...] = ()
    positive_exemplars: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "research_questions", tuple(self.research_questions))
        object.__setattr__(self, "custom_requirements", tuple(self.custom_requirements))
        object.__setattr__(self, "positive_exemplars", tuple(self.positive_exemplars))
        if not self.research_questions or not all(self.research_questions):
            raise DataError("analysis context needs at least one non-empty research question")
        if self.analysis_kind not in _ANALYSIS_KINDS:
            raise DataError(f"analysis_kind must be one of {_ANALYSIS_KINDS}, got {self.analysis_kind!r}")

    def extends(self, earlier: "AnalysisContext") -> bool:
        """True when this context's requirements have ``earlier``'s as a prefix."""
        mine = self.custom_requirements
        theirs = earlier.custom_requirements
        return mine[: len(theirs)] == theirs

    def to_dict(self) -> dict:
        return {
            "research_questions": list(self.research_questions),
            "analysis_kind": self.analysis_kind,
            "topic_focus": self.topic_focus,
            "theme_specification": self.theme_specification,
            "custom_requirements": list(self.custom_requirements),
            "positive_exemplars": list(self.positive_exemplars),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "AnalysisContext":
        return cls(
            research_questions=tuple(data["research_questions"]),
            analysis_kind=data.get("analysis_kind", "semantic"),
            topic_focus=data.get("topic_focus", ""),
            theme_specification=data.get("theme_specification", ""),
            custom_requirements=tuple(data.get("custom_requirements", ())),
            positive_exemplars=tuple(data.get("positive_exemplars", ())),
        )


@dataclass(frozen=True)
class InitialCode:
    """Short free-text label for one data point in one coding round."""

    data_point_id: str
    code_text: str
    round: int = 1

    def __post_init__(self) -> None:
        if not self.code_text:
            raise DataError(f"empty code text for data point {self.data_point_id!r}")
        if self.round < 1:
            raise DataError("coding round must be >= 1")


@dataclass(frozen=True)
class PotentialTheme:
    """Candidate theme produced by collation, with its member data points."""

    label: str
    member_ids: frozenset[str]

    def __post_init__(self) -> None:
        object.__setattr__(self, "member_ids", frozenset(self.member_ids))
        if not self.label:
            raise DataError("potential theme label must be non-empty")
        if not self.member_ids:
            raise DataError(f"potential theme {self.label!r} has no members")


@dataclass(frozen=True)
class Theme:
    """High-level theme owning candidate themes as sub-themes."""

    label: str
    sub_themes: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "sub_themes", tuple(self.sub_themes))
        if not self.label:
            raise DataError("theme label must be non-empty")
        if not self.sub_themes:
            raise DataError(f"high-level theme {self.label!r} has no sub-themes")


@dataclass(frozen=True)
class ThemeSet:
    """Output of the merge stage: high-level themes over candidate sub-themes."""

    themes: tuple[Theme, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "themes", tuple(self.themes))
        if not self.themes:
            raise DataError("theme set must contain at least one theme")
        seen: set[str] = set()
        for t in self.themes:
            key = normalize_label(t.label)
            if key in seen:
                raise DataError(f"duplicate high-level theme label {t.label!r}")
            seen.add(key)

    def labels(self) -> tuple[str, ...]:
        return tuple(t.label for t in self.themes)

    def sub_theme_labels(self) -> tuple[str, ...]:
        return tuple(s for t in self.themes for s in t.sub_themes)

    def to_dict(self) -> dict:
        return {"themes": [{"label": t.label, "sub_themes": list(t.sub_themes)} for t in self.themes]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "ThemeSet":
        return cls(
            themes=tuple(
                Theme(label=t["label"], sub_themes=tuple(t["sub_themes"])) for t in data["themes"]
            )
        )


@dataclass(frozen=True)
class ThemeAssignment:
    """Ranked theme labels predicted for one data point."""

    data_point_id: str
    ranked_themes: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "ranked_themes", tuple(self.ranked_themes))
        if not self.ranked_themes:
            raise DataError(f"assignment for {self.data_point_id!r} has no themes")
        normalized = [normalize_label(t) for t in self.ranked_themes]
        if len(set(normalized)) != len(normalized):
            raise DataError(f"assignment for {self.data_point_id!r} repeats a theme")


class Verdict(str, Enum):
    """Quality verdict for one initial code, checked in this order."""

    NOT_HOW = "not_how"
    NOT_WHAT = "not_what"
    OK = "ok"


@dataclass(frozen=True)
class QualityAnnotation:
    """Expert quality verdict for one (data point, round) pair."""

    data_point_id: str
    round: int
    verdict: Verdict

    def __post_init__(self) -> None:
        if not isinstance(self.verdict, Verdict):
            object.__setattr__(self, "verdict", Verdict(self.verdict))
        if self.round < 1:
            raise DataError("annotation round must be >= 1")


@dataclass(frozen=True)
class GenerationParams:
    """Decoding parameters for a chat-completion call.

    Defaults pin the deterministic regime: temperature 0, top_p 1, no
    repetition penalties; the context window defaults to 8,192 tokens shared
    by prompt and completion.
    """

    temperature: float = 0.0
    top_p: float = 1.0
    frequency_penalty: float = 0.0
    presence_penalty: float = 0.0
    max_tokens: int = 2000
    context_limit: int = 8192

    def __post_init__(self) -> None:
        if not (0 < self.max_tokens < self.context_limit):
            raise DataError(
                f"max_tokens must satisfy 0 < max_tokens < context_limit "
                f"(got {self.max_tokens} vs {self.context_limit})"
            )

    def with_max_tokens(self, max_tokens: int) -> "GenerationParams":
        return replace(self, max_tokens=max_tokens)

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "top_p": self.top_p,
            "frequency_penalty": self.frequency_penalty,
            "presence_penalty": self.presence_penalty,
            "max_tokens": self.max_tokens,
            "context_limit": self.context_limit,
        }


@dataclass(frozen=True)
class ThemeSetReport:
    """Partition check result for a theme set against candidate labels."""

    ok: bool
    missing: tuple[str, ...] = ()
    duplicated: tuple[str, ...] = ()
    unknown: tuple[str, ...] = ()

    def describe(self) -> str:
        if self.ok:
            return "theme set partitions the candidates exactly"
        parts = []
        if self.missing:
            parts.append("missing candidates: " + ", ".join(self.missing))
        if self.duplicated:
            parts.append("candidates placed more than once: " + ", ".join(self.duplicated))
        if self.unknown:
            parts.append("sub-themes that are not candidates: " + ", ".join(self.unknown))
        return "; ".join(parts)


def validate_theme_set(theme_set: ThemeSet, candidates: Iterable[str]) -> ThemeSetReport:
    """Check that ``theme_set`` partitions ``candidates`` exactly.

    Labels are compared in normalized form; the report lists display labels.
    """
    candidate_list = list(candidates)
    if not candidate_list:
        raise DataError("candidate label list must be non-empty")
    candidate_keys = {normalize_label(c): c for c in candidate_list}

    placements: dict[str, int] = {}
    unknown: list[str] = []
    for theme in theme_set.themes:
        for sub in theme.sub_themes:
            key = normalize_label(sub)
            if key not in candidate_keys:
                unknown.append(sub)
                continue
            placements[key] = placements.get(key, 0) + 1

    missing = tuple(candidate_keys[k] for k in candidate_keys if k not in placements)
    duplicated = tuple(candidate_keys[k] for k, n in placements.items() if n > 1)
    report = ThemeSetReport(
        ok=not missing and not duplicated and not unknown,
        missing=missing,
        duplicated=duplicated,
        unknown=tuple(unknown),
    )
    return report
