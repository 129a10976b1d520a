"""Quantitative evaluation: recall@k against gold themes, quality-verdict
tallies, and the expert-vs-auto theme mapping with its flow export.

Pure functions over immutable inputs; reports serialize to JSON, aligned-
column text, and CSV flows.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping, Sequence

from .errors import DataError
from .model import QualityAnnotation, ThemeAssignment, Verdict, normalize_label


@dataclass(frozen=True)
class ThemeRecall:
    """Recall at depth 1 and depth k for one gold theme (or overall)."""

    r_at_1: float
    r_at_k: float
    support: int


@dataclass(frozen=True)
class RecallReport:
    """Per-theme and overall recall at depths 1 and k.

    ``residual_themes`` lists gold themes that cannot be predicted because
    they are absent from the prediction label universe; their rows stay in
    ``per_theme`` (with zero recall) rather than being dropped.
    """

    per_theme: Mapping[str, ThemeRecall]
    overall: ThemeRecall
    k: int
    residual_themes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "overall": {"r_at_1": self.overall.r_at_1, f"r_at_{self.k}": self.overall.r_at_k,
                        "support": self.overall.support},
            "per_theme": {
                theme: {"r_at_1": tr.r_at_1, f"r_at_{self.k}": tr.r_at_k, "support": tr.support}
                for theme, tr in self.per_theme.items()
            },
            "residual_themes": list(self.residual_themes),
        }


def recall_at_k(
    assignments: Sequence[ThemeAssignment],
    gold: Mapping[str, str],
    k: int = 3,
    theme_list: Sequence[str] | None = None,
) -> RecallReport:
    """Fraction of points whose gold label appears in the top 1 / top k.

    Per-theme rows group points by their gold label; the overall row is the
    support-weighted mean (equivalently, pooled hits over pooled support).
    Labels are compared after normalization.
    """
    if not gold:
        raise DataError("no gold labels to evaluate against")
    by_id = {a.data_point_id: a for a in assignments}
    missing = sorted(set(gold) - set(by_id))
    if missing:
        raise DataError(f"{len(missing)} gold-labeled ids lack assignments (first: {missing[0]!r})")

    hits1: dict[str, int] = {}
    hitsk: dict[str, int] = {}
    support: dict[str, int] = {}
    for point_id, gold_label in gold.items():
        ranked = by_id[point_id].ranked_themes
        if k > len(ranked):
            raise DataError(
                f"k={k} exceeds the ranked list length {len(ranked)} for id {point_id!r}"
            )
        gold_key = normalize_label(gold_label)
        ranked_keys = [normalize_label(t) for t in ranked]
        support[gold_label] = support.get(gold_label, 0) + 1
        hits1[gold_label] = hits1.get(gold_label, 0) + (gold_key == ranked_keys[0])
        hitsk[gold_label] = hitsk.get(gold_label, 0) + (gold_key in ranked_keys[:k])

    per_theme = {
        theme: ThemeRecall(
            r_at_1=hits1[theme] / support[theme],
            r_at_k=hitsk[theme] / support[theme],
            support=support[theme],
        )
        for theme in sorted(support)
    }
    total = sum(support.values())
    overall = ThemeRecall(
        r_at_1=sum(hits1.values()) / total,
        r_at_k=sum(hitsk.values()) / total,
        support=total,
    )

    if theme_list is not None:
        universe = {normalize_label(t) for t in theme_list}
    else:
        universe = {normalize_label(t) for a in assignments for t in a.ranked_themes}
    residual = tuple(t for t in sorted(support) if normalize_label(t) not in universe)
    return RecallReport(per_theme=per_theme, overall=overall, k=k, residual_themes=residual)


def _pct(count: int, total: int) -> float:
    """Percentage rounded half-up to one decimal, matching reporting tables."""
    if total == 0:
        return 0.0
    value = Decimal(count * 100) / Decimal(total)
    return float(value.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class QualityTally:
    """Counts and percentages of quality verdicts for one coding round."""

    counts: Mapping[Verdict, int]
    percentages: Mapping[Verdict, float]
    total: int
    ok_pct: float
    not_ok_pct: float
    empty: bool

    def to_dict(self) -> dict:
        return {
            "counts": {v.value: self.counts[v] for v in Verdict},
            "percentages": {v.value: self.percentages[v] for v in Verdict},
            "total": self.total,
            "ok_pct": self.ok_pct,
            "not_ok_pct": self.not_ok_pct,
            "empty": self.empty,
        }


def tally_quality(annotations: Iterable[QualityAnnotation]) -> QualityTally:
    """Tally verdicts; percentages to one decimal, half-up.

    The annotated set must hold at most one verdict per (data point, round).
    An empty input yields zero counts with the ``empty`` flag set.
    """
    counts = {v: 0 for v in Verdict}
    seen: set[tuple[str, int]] = set()
    for ann in annotations:
        key = (ann.data_point_id, ann.round)
        if key in seen:
            raise DataError(f"duplicate annotation for data point {key[0]!r} round {key[1]}")
        seen.add(key)
        counts[ann.verdict] += 1
    total = sum(counts.values())
    not_ok = counts[Verdict.NOT_HOW] + counts[Verdict.NOT_WHAT]
    return QualityTally(
        counts=counts,
        percentages={v: _pct(counts[v], total) for v in Verdict},
        total=total,
        ok_pct=_pct(counts[Verdict.OK], total),
        not_ok_pct=_pct(not_ok, total),
        empty=total == 0,
    )


@dataclass(frozen=True)
class MappingMatrix:
    """Cross-tab of gold themes (rows) against auto themes (columns)."""

    rows: tuple[str, ...]
    cols: tuple[str, ...]
    cells: Mapping[tuple[str, str], int]

    def cell(self, row: str, col: str) -> int:
        return self.cells.get((row, col), 0)

    def row_total(self, row: str) -> int:
        return sum(n for (r, _), n in self.cells.items() if r == row)

    def total(self) -> int:
        return sum(self.cells.values())

    def to_dict(self) -> dict:
        return {
            "rows": list(self.rows),
            "cols": list(self.cols),
            "cells": [
                {"gold": r, "auto": c, "count": n} for (r, c), n in sorted(self.cells.items())
            ],
        }


Flow = tuple[str, str, int]


def theme_mapping(
    assignments: Sequence[ThemeAssignment], gold: Mapping[str, str]
) -> tuple[MappingMatrix, list[Flow]]:
    """Cross-tab gold labels against rank-1 predictions, plus a flow list
    (source, target, weight) ready for Sankey rendering."""
    if not gold:
        raise DataError("no gold labels to map against")
    by_id = {a.data_point_id: a for a in assignments}
    missing = sorted(set(gold) - set(by_id))
    if missing:
        raise DataError(f"{len(missing)} gold-labeled ids lack assignments (first: {missing[0]!r})")

    cells: dict[tuple[str, str], int] = {}
    for point_id, gold_label in gold.items():
        auto_label = by_id[point_id].ranked_themes[0]
        key = (gold_label, auto_label)
        cells[key] = cells.get(key, 0) + 1
    rows = tuple(sorted({r for r, _ in cells}))
    cols = tuple(sorted({c for _, c in cells}))
    matrix = MappingMatrix(rows=rows, cols=cols, cells=cells)
    flows = [(r, c, n) for (r, c), n in sorted(cells.items())]
    return matrix, flows


def flows_to_csv(flows: Sequence[Flow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["source", "target", "weight"])
    for source, target, weight in flows:
        writer.writerow([source, target, weight])
    return buf.getvalue()


def render_recall_text(report: RecallReport) -> str:
    """Aligned-column plain-text recall table."""
    name_width = max([len(t) for t in report.per_theme] + [len("Overall")]) + 2
    header = f"{'Theme':<{name_width}}{'R@1':>6}{f'R@{report.k}':>6}{'n':>7}"
    lines = [header, "-" * len(header)]
    for theme, tr in report.per_theme.items():
        flag = " *" if theme in report.residual_themes else ""
        lines.append(
            f"{theme:<{name_width}}{tr.r_at_1:>6.2f}{tr.r_at_k:>6.2f}{tr.support:>7}{flag}"
        )
    lines.append("-" * len(header))
    o = report.overall
    lines.append(f"{'Overall':<{name_width}}{o.r_at_1:>6.2f}{o.r_at_k:>6.2f}{o.support:>7}")
    if report.residual_themes:
        lines.append("* gold theme absent from the prediction theme list")
    return "\n".join(lines)


def render_tally_text(tally: QualityTally) -> str:
    if tally.empty:
        return "No annotations."
    rows = [
        ("not how", Verdict.NOT_HOW),
        ("not what", Verdict.NOT_WHAT),
        ("ok", Verdict.OK),
    ]
    lines = [f"{'Verdict':<12}{'Count':>7}{'Pct':>8}", "-" * 27]
    for label, verdict in rows:
        lines.append(
            f"{label:<12}{tally.counts[verdict]:>7}{tally.percentages[verdict]:>7.1f}%"
        )
    lines.append("-" * 27)
    lines.append(f"{'ok':<12}{tally.counts[Verdict.OK]:>7}{tally.ok_pct:>7.1f}%")
    not_ok = tally.counts[Verdict.NOT_HOW] + tally.counts[Verdict.NOT_WHAT]
    lines.append(f"{'not ok':<12}{not_ok:>7}{tally.not_ok_pct:>7.1f}%")
    return "\n".join(lines)


def report_to_json(report: RecallReport | QualityTally | MappingMatrix) -> str:
    return json.dumps(report.to_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n"
