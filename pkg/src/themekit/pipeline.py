"""Stage orchestration: iterative coding, expert feedback, collation of codes
into candidate themes, theme merge, and deductive classification.

Coding and collation run strictly sequentially because each batch's prompt
depends on interim results from earlier batches; classification carries no
interim context and may fan out to a bounded worker pool. All outputs are
committed through the run store batch by batch, which is what makes every
stage resumable after a crash.
"""

from __future__ import annotations

import hashlib
import random
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

from .batching import (
    Batch,
    TokenBudget,
    TokenCounter,
    count_tokens,
    pack_batches,
    pack_items,
    truncate_to_fit,
)
from .errors import ApprovalRequiredError, ContextOverflowError, DataError, StageValidationError
from .gateway import CompletionRequest, Gateway
from .model import (
    AnalysisContext,
    GenerationParams,
    InitialCode,
    PotentialTheme,
    ThemeAssignment,
    ThemeSet,
    Theme,
    normalize_label,
    validate_theme_set,
)
from .prompts import (
    CODE_ITEM,
    GeneralResources,
    TemplateSet,
    build_classification_prompt,
    build_coding_prompt,
    build_collation_prompt,
    build_merge_prompt,
    format_item,
)
from .store import RunStore

STAGE_MAX_TOKENS = {"coding": 2000, "collation": 2000, "merge": 3000, "classification": 1500}

CODING_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["id", "code"],
        "properties": {"id": {"type": "string"}, "code": {"type": "string", "minLength": 1}},
    },
}

COLLATION_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["id", "theme"],
        "properties": {"id": {"type": "string"}, "theme": {"type": "string", "minLength": 1}},
    },
}

MERGE_SCHEMA = {
    "type": "array",
    "minItems": 1,
    "items": {
        "type": "object",
        "required": ["theme", "sub_themes"],
        "properties": {
            "theme": {"type": "string", "minLength": 1},
            "sub_themes": {"type": "array", "minItems": 1, "items": {"type": "string"}},
        },
    },
}


def classification_schema(k: int) -> dict:
    return {
        "type": "array",
        "items": {
            "type": "object",
            "required": ["id", "themes"],
            "properties": {
                "id": {"type": "string"},
                "themes": {
                    "type": "array",
                    "minItems": k,
                    "maxItems": k,
                    "items": {"type": "string", "minLength": 1},
                },
            },
        },
    }


def derive_seed(*parts) -> int:
    """Stable cross-process seed from heterogeneous parts."""
    payload = ":".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(payload.encode("utf-8")).digest()[:8], "big")


@dataclass(frozen=True)
class Feedback:
    """Expert feedback on a coding round: focus points, exclusions, exemplars."""

    positive: tuple[str, ...] = ()
    negative: tuple[str, ...] = ()
    exemplars: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "positive", tuple(self.positive))
        object.__setattr__(self, "negative", tuple(self.negative))
        object.__setattr__(self, "exemplars", tuple(self.exemplars))

    @classmethod
    def from_dict(cls, data: Mapping) -> "Feedback":
        return cls(
            positive=tuple(data.get("positive", ())),
            negative=tuple(data.get("negative", ())),
            exemplars=tuple(data.get("exemplars", ())),
        )


def apply_feedback(ctx: AnalysisContext, feedback: Feedback) -> AnalysisContext:
    """Fold expert feedback into a new context.

    Positive items become "focus on: ..." requirements, negative items become
    "do not encode: ..." requirements, appended in that order; exemplars join
    positive_exemplars. The input context is untouched.
    """
    items = [p for p in feedback.positive if p] + [n for n in feedback.negative if n]
    exemplars = tuple(e for e in feedback.exemplars if e)
    if not items and not exemplars:
        raise DataError("feedback must contain at least one non-empty item")
    new_requirements = tuple(
        [f"focus on: {p}" for p in feedback.positive if p]
        + [f"do not encode: {n}" for n in feedback.negative if n]
    )
    return replace(
        ctx,
        custom_requirements=ctx.custom_requirements + new_requirements,
        positive_exemplars=ctx.positive_exemplars + exemplars,
    )


def select_carry_labels(counts: Mapping[str, int], limit: int = 20) -> list[str]:
    """The most frequent theme labels, ties broken by label ascending."""
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [label for label, _ in ranked[:limit]]


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for one run; stage max_tokens defaults fit an 8,192-token window.

    ``interim_token_reserve`` budgets (and caps, via truncation) each sampled
    interim code; ``carry_label_reserve`` budgets each carried theme label;
    ``retry_prompt_reserve`` keeps room for corrective re-prompt paragraphs so
    retries cannot overflow the context.
    """

    params: GenerationParams = field(default_factory=GenerationParams)
    stage_max_tokens: Mapping[str, int] = field(default_factory=lambda: dict(STAGE_MAX_TOKENS))
    sample_size: int = 20
    interim_token_reserve: int = 30
    carry_label_reserve: int = 12
    retry_prompt_reserve: int = 192
    max_themes: int = 20
    k: int = 3
    parallelism: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sample_size < 0 or self.max_themes < 1 or self.k < 1 or self.parallelism < 1:
            raise DataError("sample_size must be >= 0; max_themes, k, parallelism >= 1")
        if self.interim_token_reserve < 8 or self.carry_label_reserve < 4:
            raise DataError("token reserves are too small to hold any content")
        if self.retry_prompt_reserve < 0:
            raise DataError("retry_prompt_reserve must be non-negative")

    def stage_params(self, stage: str) -> GenerationParams:
        return self.params.with_max_tokens(self.stage_max_tokens.get(stage, self.params.max_tokens))

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "stage_max_tokens": dict(self.stage_max_tokens),
            "sample_size": self.sample_size,
            "interim_token_reserve": self.interim_token_reserve,
            "max_themes": self.max_themes,
            "k": self.k,
            "parallelism": self.parallelism,
            "seed": self.seed,
        }


ProgressCallback = Callable[[str, int, int, int], None]


class Runner:
    """Drives the pipeline stages for one run.

    One writer per run: stage methods assume they own the store handle.
    """

    def __init__(
        self,
        store: RunStore,
        gateway: Gateway | None,
        config: PipelineConfig | None = None,
        resources: GeneralResources | None = None,
        templates: TemplateSet | None = None,
        progress: ProgressCallback | None = None,
    ) -> None:
        self.store = store
        self._gateway = gateway
        self.config = config or PipelineConfig()
        self.resources = resources or GeneralResources.default()
        self.templates = templates or TemplateSet.default()
        self._progress = progress

    # -- shared plumbing -----------------------------------------------------

    @property
    def gateway(self) -> Gateway:
        if self._gateway is None:
            raise DataError("this operation needs a completion backend, but none was configured")
        return self._gateway

    @property
    def _counter(self) -> TokenCounter:
        from .batching import DEFAULT_COUNTER

        return self._gateway.counter if self._gateway is not None else DEFAULT_COUNTER

    def _report(self, stage: str, round_: int, done: int, total: int) -> None:
        if self._progress is not None:
            self._progress(stage, round_, done, total)

    # Budget seams: heuristic token counts of concatenated parts under-count
    # at join points, so a small fixed margin absorbs them.
    _SEAM_MARGIN = 8
    _SECTION_HEADER_RESERVE = 24

    def _interim_reserve(self) -> int:
        if self.config.sample_size == 0:
            return 0
        return self._SECTION_HEADER_RESERVE + self.config.sample_size * self.config.interim_token_reserve

    def _carry_reserve(self) -> int:
        return self._SECTION_HEADER_RESERVE + 20 * self.config.carry_label_reserve

    def _longest_id(self) -> str:
        return max(self.store.dataset().ids(), key=len)

    def _budget(self, stage: str, system: str, user_base: str, reserve: int, item_probe: str) -> TokenBudget:
        """Token envelope for batch content.

        ``item_probe`` is the per-item wrapper rendered with the longest id in
        the dataset and empty content, so no real item can cost more than the
        budgeted wrapper overhead plus its own text.
        """
        params = self.config.stage_params(stage)
        fixed = (
            count_tokens(system, self._counter)
            + count_tokens(user_base, self._counter)
            + reserve
            + self.config.retry_prompt_reserve
            + self._SEAM_MARGIN
        )
        return TokenBudget(
            context_limit=params.context_limit,
            completion_reserve=params.max_tokens,
            fixed_overhead=fixed,
            per_item_overhead=count_tokens(item_probe, self._counter) + 1,
        )

    def _structured(self, request: CompletionRequest, schema: Mapping):
        try:
            return self.gateway.complete_structured(request, schema)
        except ContextOverflowError as exc:
            raise StageValidationError(
                f"assembled prompt exceeds the context budget, which signals a "
                f"mis-sized batch (packing bug): {exc}",
                stage=request.stage,
                batch_index=request.batch_index,
            ) from exc

    def _mapped_by_id(
        self,
        request: CompletionRequest,
        schema: Mapping,
        expected_ids: Sequence[str],
        value_key: str,
        round_: int,
    ) -> dict[str, object]:
        """Structured call whose entries must cover ``expected_ids`` exactly.

        Unknown or missing ids trigger one corrective re-prompt, then error.
        """
        completion = self._structured(request, schema)
        mapping, problems = self._reconcile_ids(completion.value, expected_ids, value_key)
        if not problems:
            return mapping
        corrective = (
            "Your previous output did not cover the requested ids correctly: "
            + "; ".join(problems)
            + ". Reply again with exactly one entry per listed id and no other ids."
        )
        retry = replace(request, user_message=request.user_message + "\n\n" + corrective)
        completion = self._structured(retry, schema)
        mapping, problems = self._reconcile_ids(completion.value, expected_ids, value_key)
        if problems:
            raise StageValidationError(
                "response ids still wrong after corrective re-prompt: " + "; ".join(problems),
                stage=request.stage,
                round_=round_,
                batch_index=request.batch_index,
            )
        return mapping

    @staticmethod
    def _reconcile_ids(
        entries: Sequence[Mapping], expected_ids: Sequence[str], value_key: str
    ) -> tuple[dict[str, object], list[str]]:
        expected = set(expected_ids)
        mapping: dict[str, object] = {}
        problems: list[str] = []
        duplicates: list[str] = []
        unknown: list[str] = []
        for entry in entries:
            entry_id = entry["id"]
            if entry_id not in expected:
                unknown.append(entry_id)
                continue
            if entry_id in mapping:
                duplicates.append(entry_id)
                continue
            mapping[entry_id] = entry[value_key]
        missing = [i for i in expected_ids if i not in mapping]
        if missing:
            problems.append("missing ids: " + ", ".join(missing))
        if unknown:
            problems.append("unknown ids: " + ", ".join(sorted(set(unknown))))
        if duplicates:
            problems.append("duplicated ids: " + ", ".join(sorted(set(duplicates))))
        return mapping, problems

    # -- stage: initial coding -------------------------------------------------

    def run_initial_coding(self, round_: int = 1, seed: int | None = None) -> list[InitialCode]:
        """Generate one initial code per data point for ``round_``.

        Batches are processed strictly in packed order; each batch's prompt
        carries a deterministic random sample of the codes produced so far.
        """
        if round_ < 1:
            raise DataError("round must be >= 1")
        seed = self.config.seed if seed is None else seed
        ctx = self.store.context(round_)
        params = self.config.stage_params("coding")
        system, user_probe = build_coding_prompt(
            Batch(index=0, items=(("probe", ""),)), ctx, [], self.resources, self.templates
        )
        user_base = user_probe.replace(format_item("probe", ""), "")
        budget = self._budget(
            "coding", system, user_base, self._interim_reserve(),
            item_probe=format_item(self._longest_id(), ""),
        )
        batches = pack_batches(self.store.dataset(), budget, self._counter)

        interim_limit = max(self.config.interim_token_reserve - 4, 4)
        start = self.store.resume_point("coding", round_)
        codes = self.store.initial_codes(round_)
        self._report("coding", round_, start, len(batches))
        for i in range(start, len(batches)):
            batch = batches[i]
            rng = random.Random(derive_seed(seed, "coding", round_, i))
            pool = [c.code_text for c in codes]
            sample_size = min(self.config.sample_size, len(pool))
            interim = (
                [truncate_to_fit(c, interim_limit, self._counter) for c in rng.sample(pool, sample_size)]
                if sample_size
                else []
            )
            system, user = build_coding_prompt(batch, ctx, interim, self.resources, self.templates)
            request = CompletionRequest(
                system_message=system,
                user_message=user,
                params=params,
                stage="coding",
                batch_index=i,
            )
            mapped = self._mapped_by_id(request, CODING_SCHEMA, batch.ids(), "code", round_)
            batch_codes = [InitialCode(pid, str(mapped[pid]), round_) for pid in batch.ids()]
            self.store.commit_batch(
                "coding",
                round_,
                i,
                {"codes": [{"id": c.data_point_id, "code": c.code_text} for c in batch_codes]},
            )
            codes.extend(batch_codes)
            self._report("coding", round_, i + 1, len(batches))
        return codes

    # -- feedback ----------------------------------------------------------------

    def apply_feedback(self, feedback: Feedback) -> int:
        """Append feedback as a new context round; returns the new round number."""
        current_round = self.store.latest_round()
        new_ctx = apply_feedback(self.store.context(current_round), feedback)
        new_round = current_round + 1
        self.store.append_context(new_round, new_ctx)
        return new_round

    # -- stage: collation ----------------------------------------------------------

    def run_code_collation(
        self, round_: int, seed: int | None = None
    ) -> tuple[dict[str, str], list[PotentialTheme]]:
        """Collate the round's initial codes into candidate themes.

        Every data point ends up with exactly one candidate theme; each batch
        prompt carries the 20 most frequent themes seen so far.
        """
        codes = self.store.initial_codes(round_)
        dataset_ids = list(self.store.dataset().ids())
        coded_ids = {c.data_point_id for c in codes}
        missing = [i for i in dataset_ids if i not in coded_ids]
        if missing:
            raise DataError(
                f"collation needs a code for every data point; round {round_} lacks "
                f"{len(missing)} (first missing: {missing[0]})"
            )
        ctx = self.store.context(min(round_, self.store.latest_round()))
        params = self.config.stage_params("collation")
        code_by_id = {c.data_point_id: c.code_text for c in codes}

        system, user_probe = build_collation_prompt([], ctx, [], self.resources, self.templates)
        budget = self._budget(
            "collation", system, user_probe, self._carry_reserve(),
            item_probe=CODE_ITEM.format(id=self._longest_id(), code=""),
        )
        items = [(pid, code_by_id[pid]) for pid in dataset_ids]
        batches = pack_items(items, budget, self._counter)

        display: dict[str, str] = {}
        counts: Counter[str] = Counter()
        assignment: dict[str, str] = {}
        start = self.store.resume_point("collation", round_)
        for row in self.store.stage_batches("collation", round_):
            for entry in row["themes"]:
                label = entry["theme"]
                key = normalize_label(label)
                display.setdefault(key, label)
                counts[display[key]] += 1
                assignment[entry["id"]] = display[key]

        self._report("collation", round_, start, len(batches))
        for i in range(start, len(batches)):
            batch = batches[i]
            carry = select_carry_labels(counts, limit=20)
            system, user = build_collation_prompt(
                batch.items, ctx, carry, self.resources, self.templates
            )
            request = CompletionRequest(
                system_message=system,
                user_message=user,
                params=params,
                stage="collation",
                batch_index=i,
            )
            mapped = self._mapped_by_id(request, COLLATION_SCHEMA, batch.ids(), "theme", round_)
            committed = []
            for pid in batch.ids():
                raw = str(mapped[pid]).strip()
                key = normalize_label(raw)
                display.setdefault(key, raw)
                label = display[key]
                counts[label] += 1
                assignment[pid] = label
                committed.append({"id": pid, "theme": label})
            self.store.commit_batch("collation", round_, i, {"themes": committed})
            self._report("collation", round_, i + 1, len(batches))

        groups: dict[str, set[str]] = {}
        for pid, label in assignment.items():
            groups.setdefault(label, set()).add(pid)
        themes = [PotentialTheme(label, frozenset(ids)) for label, ids in sorted(groups.items())]
        return assignment, themes

    # -- stage: theme merge -----------------------------------------------------------

    def run_theme_merge(self, round_: int) -> ThemeSet:
        """Merge the round's candidate themes into a compact high-level set."""
        stored = self.store.merged_theme_set(round_)
        if stored is not None:
            return stored
        candidates = self.store.potential_themes(round_)
        if not candidates:
            raise DataError(f"no candidate themes for round {round_}; run collation first")
        ctx = self.store.context(min(round_, self.store.latest_round()))
        params = self.config.stage_params("merge")
        freq = sorted(
            ((t.label, len(t.member_ids)) for t in candidates), key=lambda kv: (-kv[1], kv[0])
        )
        system, user = build_merge_prompt(
            freq, ctx, self.config.max_themes, self.resources, self.templates
        )
        request = CompletionRequest(
            system_message=system, user_message=user, params=params, stage="merge", batch_index=0
        )
        candidate_labels = [t.label for t in candidates]
        theme_set, problems = self._merge_response(request, candidate_labels)
        if problems:
            corrective = (
                "Your previous grouping was not a valid partition of the candidates: "
                + problems
                + ". Reply again placing every candidate under exactly one high-level theme."
            )
            retry = replace(request, user_message=request.user_message + "\n\n" + corrective)
            theme_set, problems = self._merge_response(retry, candidate_labels)
            if problems:
                raise StageValidationError(
                    "merged themes still invalid after corrective re-prompt: " + problems,
                    stage="merge",
                    round_=round_,
                )
        assert theme_set is not None
        self.store.commit_batch("merge", round_, 0, theme_set.to_dict())
        return theme_set

    def _merge_response(
        self, request: CompletionRequest, candidate_labels: Sequence[str]
    ) -> tuple[ThemeSet | None, str]:
        completion = self._structured(request, MERGE_SCHEMA)
        canon = {normalize_label(c): c for c in candidate_labels}
        themes = []
        try:
            for entry in completion.value:
                subs = [canon.get(normalize_label(s), str(s).strip()) for s in entry["sub_themes"]]
                themes.append(Theme(label=str(entry["theme"]).strip(), sub_themes=tuple(subs)))
            theme_set = ThemeSet(themes=tuple(themes))
        except DataError as exc:
            return None, str(exc)
        report = validate_theme_set(theme_set, candidate_labels)
        if not report.ok:
            return None, report.describe()
        if len(theme_set.themes) > self.config.max_themes:
            return None, (
                f"{len(theme_set.themes)} high-level themes exceed the maximum of "
                f"{self.config.max_themes}"
            )
        return theme_set, ""

    # -- approval checkpoint ---------------------------------------------------------

    def approve_themes(
        self, round_: int, theme_set: ThemeSet | None = None, auto: bool = False
    ) -> ThemeSet:
        """Record expert approval of the merged themes, optionally with edits."""
        merged = self.store.merged_theme_set(round_)
        if merged is None:
            raise DataError(f"round {round_} has no merged theme set to approve")
        edited = theme_set is not None
        final = theme_set or merged
        if edited:
            candidates = [t.label for t in self.store.potential_themes(round_)]
            report = validate_theme_set(final, candidates)
            if not report.ok:
                raise DataError(f"edited theme set rejected: {report.describe()}")
        self.store.record_approval(round_, final, edited=edited, auto=auto)
        return final

    # -- stage: classification ----------------------------------------------------------

    def run_classification(
        self,
        round_: int,
        k: int | None = None,
        parallelism: int | None = None,
        allow_unapproved: bool = False,
        themes: Sequence[str] | None = None,
    ) -> list[ThemeAssignment]:
        """Assign k ranked themes to every data point.

        Uses the approved theme set for the round unless an explicit theme
        list is supplied (deductive coding against a predefined list).
        Refuses to run on an unapproved merge result unless overridden.
        """
        k = self.config.k if k is None else k
        parallelism = self.config.parallelism if parallelism is None else parallelism
        if k < 1:
            raise DataError("k must be at least 1")
        if themes is None:
            approved = self.store.approved_themes(round_)
            if approved is None:
                if not allow_unapproved:
                    raise ApprovalRequiredError(
                        f"theme set for round {round_} is not approved; approve it or "
                        "pass the override to classify anyway"
                    )
                approved = self.store.merged_theme_set(round_)
                if approved is None:
                    raise DataError(f"round {round_} has no merged theme set")
            labels = list(approved.labels())
        else:
            labels = list(themes)
        if not labels:
            raise DataError("classification needs a non-empty theme list")
        if k > len(labels):
            raise DataError(f"k={k} exceeds the number of available themes ({len(labels)})")

        params = self.config.stage_params("classification")
        probe_system, probe_user = build_classification_prompt(
            Batch(index=0, items=(("probe", ""),)), labels, k, self.resources, self.templates
        )
        user_base = probe_user.replace(format_item("probe", ""), "")
        budget = self._budget(
            "classification", probe_system, user_base, 0,
            item_probe=format_item(self._longest_id(), ""),
        )
        batches = pack_batches(self.store.dataset(), budget, self._counter)
        schema = classification_schema(k)

        start = self.store.resume_point("classification", round_)
        self._report("classification", round_, start, len(batches))

        def classify_batch(batch: Batch) -> list[dict]:
            system, user = build_classification_prompt(
                batch, labels, k, self.resources, self.templates
            )
            request = CompletionRequest(
                system_message=system,
                user_message=user,
                params=params,
                stage="classification",
                batch_index=batch.index,
            )
            mapped = self._mapped_by_id(request, schema, batch.ids(), "themes", round_)
            resolved, problems = self._resolve_labels(mapped, batch.ids(), labels, k)
            if problems:
                corrective = (
                    "Your previous output was not usable: "
                    + "; ".join(problems)
                    + ". Reply again using only labels from the allowed theme list, "
                    "exactly as written, with the requested number per data point."
                )
                retry = replace(request, user_message=request.user_message + "\n\n" + corrective)
                mapped = self._mapped_by_id(retry, schema, batch.ids(), "themes", round_)
                resolved, problems = self._resolve_labels(mapped, batch.ids(), labels, k)
                if problems:
                    raise StageValidationError(
                        "classification labels still unresolvable after corrective "
                        "re-prompt: " + "; ".join(problems),
                        stage="classification",
                        round_=round_,
                        batch_index=batch.index,
                    )
            return [{"id": pid, "themes": resolved[pid]} for pid in batch.ids()]

        pending = batches[start:]
        if parallelism > 1 and len(pending) > 1:
            # Fan out, but commit strictly in batch order as results complete.
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                futures = {b.index: pool.submit(classify_batch, b) for b in pending}
                for i in range(start, len(batches)):
                    entries = futures[i].result()
                    self.store.commit_batch("classification", round_, i, {"assignments": entries})
                    self._report("classification", round_, i + 1, len(batches))
        else:
            for batch in pending:
                entries = classify_batch(batch)
                self.store.commit_batch(
                    "classification", round_, batch.index, {"assignments": entries}
                )
                self._report("classification", round_, batch.index + 1, len(batches))

        by_id = {
            entry["id"]: entry["themes"]
            for row in self.store.stage_batches("classification", round_)
            for entry in row["assignments"]
        }
        return [
            ThemeAssignment(pid, tuple(by_id[pid])) for pid in self.store.dataset().ids()
        ]

    @staticmethod
    def _resolve_labels(
        mapped: Mapping[str, object],
        ids: Sequence[str],
        allowed: Sequence[str],
        k: int,
    ) -> tuple[dict[str, list[str]], list[str]]:
        """Normalize near-miss labels onto the allowed list, collecting problems."""
        canon = {normalize_label(label): label for label in allowed}
        resolved: dict[str, list[str]] = {}
        problems: list[str] = []
        for pid in ids:
            ranked: list[str] = []
            for value in mapped[pid]:
                label = canon.get(normalize_label(str(value)))
                if label is None:
                    problems.append(f"label {value!r} for id {pid!r} is not in the theme list")
                elif label in ranked:
                    problems.append(f"label {label!r} repeated for id {pid!r}")
                else:
                    ranked.append(label)
            if len(ranked) != k and not problems:
                problems.append(f"id {pid!r} got {len(ranked)} themes, expected {k}")
            resolved[pid] = ranked
        return resolved, problems

    # -- end to end -------------------------------------------------------------------

    def run_end_to_end(
        self, seed: int | None = None, k: int | None = None
    ) -> tuple[ThemeSet, list[ThemeAssignment]]:
        """Full unattended pipeline on the latest context round.

        Checkpoints land after every batch, so an interrupted run resumes
        where it stopped. The merged theme set is auto-approved (recorded as
        such); interactive runs should prefer the explicit approval step.
        """
        round_ = self.store.latest_round()
        self.run_initial_coding(round_, seed)
        self.run_code_collation(round_, seed)
        theme_set = self.run_theme_merge(round_)
        if self.store.approved_themes(round_) is None:
            self.approve_themes(round_, auto=True)
        assignments = self.run_classification(round_, k=k)
        return self.store.approved_themes(round_), assignments
