"""Seedable synthetic corpora for demos, tests, and offline pipeline runs.

Real analysis corpora are typically private, so the package ships a generator
that fabricates theft-flavored facts descriptions with planted themes. Each
text carries one thematic keyword, which lets the keyword-echo scenario answer
every stage correctly and makes end-to-end expectations computable.
"""

from __future__ import annotations

import random
from typing import Mapping, Sequence

from .model import DataPoint, Dataset

DEFAULT_THEME_KEYWORDS: dict[str, tuple[str, ...]] = {
    "bicycle theft": ("a bicycle", "a mountain bike", "an electric bike"),
    "shoplifting": ("perfume from a drugstore shelf", "groceries from a supermarket", "spirits from a shop display"),
    "residential burglary": ("a cellar compartment", "an apartment door lock", "a family house window"),
}

_PLACES = (
    "in the city center",
    "at a housing estate",
    "near the railway station",
    "in an underground garage",
    "on the outskirts of town",
)

_OPENERS = (
    "At an undetermined time overnight",
    "In the early afternoon",
    "During the weekend",
    "Shortly after closing time",
    "Between 18:00 and 06:00 the next day",
)

_FILLERS = (
    "The perpetrator left the scene unnoticed.",
    "A witness later reported a suspicious person nearby.",
    "The stolen property was never recovered.",
    "Part of the loot was later sold to unknown persons.",
    "The damage was documented by the responding officers.",
    "Security footage captured only a silhouette.",
)


def keyword_map(theme_keywords: Mapping[str, Sequence[str]] | None = None) -> dict[str, str]:
    """Invert a theme-to-keywords table into the keyword-to-theme mapping the
    keyword-echo scenario consumes."""
    table = theme_keywords or DEFAULT_THEME_KEYWORDS
    return {kw: theme for theme, kws in table.items() for kw in kws}


def generate_corpus(
    n: int,
    theme_keywords: Mapping[str, Sequence[str]] | None = None,
    seed: int = 0,
    name: str = "synthetic",
    extra_sentences: int = 3,
    oversize_every: int | None = None,
    gold_prefix: str = "",
) -> Dataset:
    """Fabricate ``n`` facts descriptions with themes planted round-robin.

    ``oversize_every`` (when set) makes every i-th document long enough to
    need truncation under typical budgets. ``gold_prefix`` decorates the gold
    labels, which is how tests plant sentinel strings that must never reach a
    prompt.
    """
    table = {theme: tuple(kws) for theme, kws in (theme_keywords or DEFAULT_THEME_KEYWORDS).items()}
    themes = sorted(table)
    rng = random.Random(seed)
    points = []
    for i in range(n):
        theme = themes[i % len(themes)]
        keyword = rng.choice(table[theme])
        opener = rng.choice(_OPENERS)
        place = rng.choice(_PLACES)
        amount = rng.randrange(500, 90000, 100)
        sentences = [
            f"{opener}, an unknown offender took {keyword} {place}.",
            f"The damage was estimated at {amount} CZK.",
        ]
        for _ in range(rng.randrange(0, extra_sentences + 1)):
            sentences.append(rng.choice(_FILLERS))
        if oversize_every and (i + 1) % oversize_every == 0:
            sentences.extend(rng.choice(_FILLERS) for _ in range(400))
        points.append(
            DataPoint(
                id=f"dp-{i:04d}",
                text=" ".join(sentences),
                gold_theme=f"{gold_prefix}{theme}",
            )
        )
    return Dataset(points=tuple(points), name=name)
