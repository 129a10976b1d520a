"""Deterministic construction of system and user messages for each stage.

Builders are pure functions of their inputs: identical inputs yield
byte-identical messages. They receive bare (id, text) pairs, never full data
points, so gold labels cannot leak into a prompt by construction.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources as importlib_resources
from pathlib import Path
from typing import Mapping, Sequence

from .batching import Batch
from .errors import ConfigError, DataError
from .model import AnalysisContext

STAGES = ("coding", "collation", "merge", "classification")

ITEM_BEGIN = "=== BEGIN DATA POINT {id} ==="
ITEM_END = "=== END DATA POINT {id} ==="
CODE_ITEM = "- id: {id} | code: {code}"
CANDIDATE_ITEM = "- {label} ({count} data points)"

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")

_ITEM_RE = re.compile(
    r"^=== BEGIN DATA POINT (?P<id>.+?) ===\n(?P<text>.*?)\n=== END DATA POINT (?P=id) ===$",
    re.DOTALL | re.MULTILINE,
)
_CODE_ITEM_RE = re.compile(r"^- id: (?P<id>.+?) \| code: (?P<code>.*)$", re.MULTILINE)
_CANDIDATE_RE = re.compile(r"^- (?P<label>.+) \((?P<count>\d+) data points?\)$", re.MULTILINE)

EXPECTED_PLACEHOLDERS: dict[tuple[str, str], frozenset[str]] = {
    ("coding", "system"): frozenset({"method_definition", "quality_checklist", "output_spec"}),
    ("coding", "user"): frozenset(
        {
            "research_questions",
            "analysis_parameters",
            "requirements_section",
            "exemplars_section",
            "interim_section",
            "items",
        }
    ),
    ("collation", "system"): frozenset({"method_definition", "quality_checklist", "output_spec"}),
    ("collation", "user"): frozenset(
        {
            "research_questions",
            "analysis_parameters",
            "requirements_section",
            "carry_section",
            "code_items",
        }
    ),
    ("merge", "system"): frozenset({"method_definition", "quality_checklist", "output_spec"}),
    ("merge", "user"): frozenset(
        {"research_questions", "analysis_parameters", "candidate_items", "theme_limit"}
    ),
    ("classification", "system"): frozenset({"method_definition", "quality_checklist", "output_spec"}),
    ("classification", "user"): frozenset({"theme_list", "k", "items"}),
}


def placeholders_of(skeleton: str) -> frozenset[str]:
    return frozenset(_PLACEHOLDER_RE.findall(skeleton))


def render_template(skeleton: str, values: Mapping[str, str]) -> str:
    """Substitute ``{name}`` placeholders; other braces stay literal.

    Substituted values are inserted verbatim (never re-scanned), so document
    text containing braces cannot disturb the template.
    """

    def _sub(match: re.Match) -> str:
        name = match.group(1)
        if name not in values:
            raise ConfigError(f"template references unknown placeholder {{{name}}}")
        return str(values[name])

    return _PLACEHOLDER_RE.sub(_sub, skeleton)


def _read_resource(name: str) -> str:
    return (
        importlib_resources.files("themekit.resources").joinpath(name).read_text(encoding="utf-8")
    ).strip("\n")


@dataclass(frozen=True)
class GeneralResources:
    """Analysis-invariant prompt material: method text, quality checklist, and
    the per-stage output-format instructions."""

    method_definition: str
    quality_checklist: str
    output_format_specs: Mapping[str, str]

    def __post_init__(self) -> None:
        if not self.method_definition.strip() or not self.quality_checklist.strip():
            raise ConfigError("general resources must be non-empty")
        missing = [s for s in STAGES if not str(self.output_format_specs.get(s, "")).strip()]
        if missing:
            raise ConfigError(f"missing output format spec for stage(s): {', '.join(missing)}")
        object.__setattr__(self, "output_format_specs", dict(self.output_format_specs))

    @classmethod
    def default(cls) -> "GeneralResources":
        return cls(
            method_definition=_read_resource("method_definition.txt"),
            quality_checklist=_read_resource("quality_checklist.txt"),
            output_format_specs={s: _read_resource(f"output_{s}.txt") for s in STAGES},
        )

    @classmethod
    def load(
        cls,
        method_definition_path: str | Path | None = None,
        quality_checklist_path: str | Path | None = None,
        output_spec_paths: Mapping[str, str | Path] | None = None,
    ) -> "GeneralResources":
        """Defaults with file overrides, so experts control the phrasing."""

        def read(path: str | Path) -> str:
            try:
                return Path(path).read_text(encoding="utf-8").strip("\n")
            except OSError as exc:
                raise ConfigError(f"cannot read resource file {path}: {exc}") from exc

        base = cls.default()
        specs = dict(base.output_format_specs)
        for stage, path in (output_spec_paths or {}).items():
            if stage not in STAGES:
                raise ConfigError(f"unknown stage {stage!r} in output spec overrides")
            specs[stage] = read(path)
        return cls(
            method_definition=(
                read(method_definition_path) if method_definition_path else base.method_definition
            ),
            quality_checklist=(
                read(quality_checklist_path) if quality_checklist_path else base.quality_checklist
            ),
            output_format_specs=specs,
        )


@dataclass(frozen=True)
class PromptTemplate:
    """System and user skeletons for one stage, with validated placeholders."""

    stage: str
    system_skeleton: str
    user_skeleton: str

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise ConfigError(f"unknown stage {self.stage!r}")
        for channel, skeleton in (("system", self.system_skeleton), ("user", self.user_skeleton)):
            expected = EXPECTED_PLACEHOLDERS[(self.stage, channel)]
            actual = placeholders_of(skeleton)
            if actual != expected:
                raise ConfigError(
                    f"{self.stage} {channel} template placeholders {sorted(actual)} "
                    f"do not match the stage's contract {sorted(expected)}"
                )


class TemplateSet:
    """The four stage templates; defaults ship with the package and any file
    in an override directory replaces the matching default."""

    def __init__(self, templates: Mapping[str, PromptTemplate]):
        missing = [s for s in STAGES if s not in templates]
        if missing:
            raise ConfigError(f"missing templates for stage(s): {', '.join(missing)}")
        self._templates = dict(templates)

    def __getitem__(self, stage: str) -> PromptTemplate:
        return self._templates[stage]

    @staticmethod
    def _default_skeleton(stage: str, channel: str) -> str:
        return (
            importlib_resources.files("themekit.resources.templates")
            .joinpath(f"{stage}.{channel}.txt")
            .read_text(encoding="utf-8")
        ).strip("\n")

    @classmethod
    def default(cls) -> "TemplateSet":
        return cls(
            {
                stage: PromptTemplate(
                    stage=stage,
                    system_skeleton=cls._default_skeleton(stage, "system"),
                    user_skeleton=cls._default_skeleton(stage, "user"),
                )
                for stage in STAGES
            }
        )

    @classmethod
    def load_dir(cls, directory: str | Path) -> "TemplateSet":
        directory = Path(directory)
        if not directory.is_dir():
            raise ConfigError(f"template directory {directory} does not exist")
        templates = {}
        for stage in STAGES:
            skeletons = {}
            for channel in ("system", "user"):
                override = directory / f"{stage}.{channel}.txt"
                if override.exists():
                    skeletons[channel] = override.read_text(encoding="utf-8").strip("\n")
                else:
                    skeletons[channel] = cls._default_skeleton(stage, channel)
            templates[stage] = PromptTemplate(
                stage=stage,
                system_skeleton=skeletons["system"],
                user_skeleton=skeletons["user"],
            )
        return cls(templates)


def format_item(item_id: str, text: str) -> str:
    return "\n".join(
        (ITEM_BEGIN.format(id=item_id), text, ITEM_END.format(id=item_id))
    )


def format_items(items: Sequence[tuple[str, str]]) -> str:
    return "\n\n".join(format_item(item_id, text) for item_id, text in items)


def parse_batch_items(user_message: str) -> list[tuple[str, str]]:
    """Recover the (id, text) pairs embedded in an assembled user message."""
    return [(m.group("id"), m.group("text")) for m in _ITEM_RE.finditer(user_message)]


def parse_code_items(user_message: str) -> list[tuple[str, str]]:
    return [(m.group("id"), m.group("code")) for m in _CODE_ITEM_RE.finditer(user_message)]


def parse_candidate_items(user_message: str) -> list[tuple[str, int]]:
    return [
        (m.group("label"), int(m.group("count"))) for m in _CANDIDATE_RE.finditer(user_message)
    ]


def _numbered(lines: Sequence[str]) -> str:
    return "\n".join(f"{i}. {line}" for i, line in enumerate(lines, start=1))


def _bulleted(lines: Sequence[str]) -> str:
    return "\n".join(f"- {line}" for line in lines)


def _analysis_parameters(ctx: AnalysisContext) -> str:
    lines = [f"Analysis type: {ctx.analysis_kind} patterns."]
    if ctx.topic_focus:
        lines.append(f"Topical focus: {ctx.topic_focus}")
    if ctx.theme_specification:
        lines.append(f"What counts as a theme: {ctx.theme_specification}")
    return "\n".join(lines)


def _requirements_section(ctx: AnalysisContext) -> str:
    if not ctx.custom_requirements:
        return ""
    return "Custom requirements (honor all, in order):\n" + _numbered(ctx.custom_requirements) + "\n\n"


def _exemplars_section(ctx: AnalysisContext) -> str:
    if not ctx.positive_exemplars:
        return ""
    return "Examples of desirable codes:\n" + _bulleted(ctx.positive_exemplars) + "\n\n"


def _system(stage: str, resources: GeneralResources, templates: TemplateSet) -> str:
    return render_template(
        templates[stage].system_skeleton,
        {
            "method_definition": resources.method_definition,
            "quality_checklist": resources.quality_checklist,
            "output_spec": resources.output_format_specs[stage],
        },
    )


def build_coding_prompt(
    batch: Batch,
    ctx: AnalysisContext,
    interim: Sequence[str],
    resources: GeneralResources | None = None,
    templates: TemplateSet | None = None,
) -> tuple[str, str]:
    """Assemble the initial-coding prompt for one batch.

    ``interim`` holds the sampled code texts from earlier batches of this
    round; an empty sample omits the section entirely.
    """
    resources = resources or GeneralResources.default()
    templates = templates or TemplateSet.default()
    interim_section = ""
    if interim:
        interim_section = (
            "Codes generated earlier in this run (keep new codes consistent with them):\n"
            + _bulleted(interim)
            + "\n\n"
        )
    user = render_template(
        templates["coding"].user_skeleton,
        {
            "research_questions": _numbered(ctx.research_questions),
            "analysis_parameters": _analysis_parameters(ctx),
            "requirements_section": _requirements_section(ctx),
            "exemplars_section": _exemplars_section(ctx),
            "interim_section": interim_section,
            "items": format_items(batch.items),
        },
    )
    return _system("coding", resources, templates), user


def build_collation_prompt(
    code_items: Sequence[tuple[str, str]],
    ctx: AnalysisContext,
    carry: Sequence[str],
    resources: GeneralResources | None = None,
    templates: TemplateSet | None = None,
) -> tuple[str, str]:
    """Assemble the collation prompt: carried-over theme labels, then the
    (id, initial code) pairs of this batch."""
    if len(carry) > 20:
        raise DataError(f"carry list holds {len(carry)} labels; at most 20 are allowed")
    resources = resources or GeneralResources.default()
    templates = templates or TemplateSet.default()
    carry_section = ""
    if carry:
        carry_section = (
            "Most frequent candidate themes so far (reuse these labels when they fit):\n"
            + _bulleted(carry)
            + "\n\n"
        )
    user = render_template(
        templates["collation"].user_skeleton,
        {
            "research_questions": _numbered(ctx.research_questions),
            "analysis_parameters": _analysis_parameters(ctx),
            "requirements_section": _requirements_section(ctx),
            "carry_section": carry_section,
            "code_items": "\n".join(
                CODE_ITEM.format(id=item_id, code=code) for item_id, code in code_items
            ),
        },
    )
    return _system("collation", resources, templates), user


def build_merge_prompt(
    candidates: Sequence[tuple[str, int]],
    ctx: AnalysisContext,
    max_themes: int = 20,
    resources: GeneralResources | None = None,
    templates: TemplateSet | None = None,
) -> tuple[str, str]:
    """Assemble the merge prompt over the whole candidate set with frequencies."""
    if not candidates:
        raise DataError("merge prompt needs at least one candidate theme")
    resources = resources or GeneralResources.default()
    templates = templates or TemplateSet.default()
    user = render_template(
        templates["merge"].user_skeleton,
        {
            "research_questions": _numbered(ctx.research_questions),
            "analysis_parameters": _analysis_parameters(ctx),
            "candidate_items": "\n".join(
                CANDIDATE_ITEM.format(label=label, count=count) for label, count in candidates
            ),
            "theme_limit": str(max_themes),
        },
    )
    return _system("merge", resources, templates), user


def build_classification_prompt(
    batch: Batch,
    themes: Sequence[str],
    k: int,
    resources: GeneralResources | None = None,
    templates: TemplateSet | None = None,
) -> tuple[str, str]:
    """Assemble the deductive-coding prompt: allowed labels, then the batch."""
    if not themes:
        raise DataError("classification needs a non-empty theme list")
    if k < 1:
        raise DataError("k must be at least 1")
    resources = resources or GeneralResources.default()
    templates = templates or TemplateSet.default()
    user = render_template(
        templates["classification"].user_skeleton,
        {
            "theme_list": _bulleted(themes),
            "k": str(k),
            "items": format_items(batch.items),
        },
    )
    return _system("classification", resources, templates), user


def parse_theme_list(user_message: str) -> list[str]:
    """Recover the allowed theme labels from a classification user message."""
    head = user_message.split(ITEM_BEGIN.split("{id}")[0], 1)[0]
    labels = []
    for line in head.splitlines():
        if line.startswith("- "):
            labels.append(line[2:])
    return labels


def parse_requested_k(user_message: str) -> int:
    match = re.search(r"Assign exactly (\d+) ranked theme", user_message)
    if not match:
        raise DataError("could not find the ranked-theme count in the message")
    return int(match.group(1))
