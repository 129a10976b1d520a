"""Deterministic stand-in for a live model, driven by keyword lookup.

The scenario answers every pipeline stage consistently with a fixed mapping
from text keywords to theme labels: coding emits a keyword-derived code,
collation turns that code into a candidate theme, merge groups candidates by
their theme, and classification ranks the matching theme first. Demo scripts
and the test suite use it to run the full pipeline offline and to plant
known-correct answers.
"""

from __future__ import annotations

import json
from typing import Mapping

from .gateway import CompletionRequest
from .prompts import (
    parse_batch_items,
    parse_candidate_items,
    parse_code_items,
    parse_requested_k,
    parse_theme_list,
)

FALLBACK_THEME = "miscellaneous incidents"
_CANDIDATE_SUFFIX = " incidents"


class KeywordScenario:
    """Callable default rule for a ScriptedBackend.

    ``keyword_to_theme`` maps a text fragment to the high-level theme label it
    signals. Keywords are matched case-insensitively, longest first, so more
    specific fragments win.
    """

    def __init__(self, keyword_to_theme: Mapping[str, str], k: int = 3):
        self.keyword_to_theme = {str(k_): str(v) for k_, v in keyword_to_theme.items()}
        self._ordered = sorted(self.keyword_to_theme, key=lambda key: (-len(key), key))
        self.k = k

    def _keyword_for(self, text: str) -> str | None:
        lowered = text.lower()
        for keyword in self._ordered:
            if keyword.lower() in lowered:
                return keyword
        return None

    def _theme_for(self, text: str) -> str:
        keyword = self._keyword_for(text)
        return self.keyword_to_theme[keyword] if keyword else FALLBACK_THEME

    def _code_for(self, text: str, detailed: bool) -> str:
        keyword = self._keyword_for(text)
        if keyword is None:
            return "unspecified incident"
        if detailed:
            return f"theft of {keyword} by forced entry"
        return f"theft of {keyword}"

    def candidate_label(self, keyword: str) -> str:
        return keyword + _CANDIDATE_SUFFIX

    def __call__(self, stage: str, batch_index: int, request: CompletionRequest) -> str:
        user = request.user_message
        if stage == "coding":
            # Richer codes once custom requirements arrive, mirroring a model
            # that responds to expert feedback.
            detailed = "Custom requirements" in user
            items = parse_batch_items(user)
            return json.dumps(
                [{"id": i, "code": self._code_for(text, detailed)} for i, text in items]
            )
        if stage == "collation":
            out = []
            for item_id, code in parse_code_items(user):
                keyword = self._keyword_for(code)
                label = self.candidate_label(keyword) if keyword else FALLBACK_THEME
                out.append({"id": item_id, "theme": label})
            return json.dumps(out)
        if stage == "merge":
            groups: dict[str, list[str]] = {}
            for label, _count in parse_candidate_items(user):
                if label.endswith(_CANDIDATE_SUFFIX):
                    keyword = label[: -len(_CANDIDATE_SUFFIX)]
                    theme = self.keyword_to_theme.get(keyword, FALLBACK_THEME)
                else:
                    theme = FALLBACK_THEME
                groups.setdefault(theme, []).append(label)
            return json.dumps(
                [{"theme": theme, "sub_themes": subs} for theme, subs in sorted(groups.items())]
            )
        if stage == "classification":
            themes = parse_theme_list(user)
            k = parse_requested_k(user)
            out = []
            for item_id, text in parse_batch_items(user):
                best = self._theme_for(text)
                ranked = [best] + [t for t in themes if t != best]
                out.append({"id": item_id, "themes": ranked[:k]})
            return json.dumps(out)
        raise KeyError(f"keyword scenario has no rule for stage {stage!r}")
