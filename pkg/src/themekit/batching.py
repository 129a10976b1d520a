"""Token accounting, oversized-document truncation, and greedy batch packing.

Everything here is a pure function of its inputs, so packing is reproducible
given (dataset, budget, counter) and safe for concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

from .errors import ConfigError, DataError
from .model import Dataset

TRUNCATION_MARKER = "[...]"


class TokenCounter(Protocol):
    """Anything that can count tokens; an exact model tokenizer plugs in here."""

    def count(self, text: str) -> int: ...


class HeuristicCounter:
    """Fallback counter: ceil(characters / 4).

    Approximate by design; it keeps the pipeline testable and runnable without
    a model-specific tokenizer. Wire an exact counter for live runs where the
    budget must be tight.
    """

    def count(self, text: str) -> int:
        return math.ceil(len(text) / 4)


DEFAULT_COUNTER = HeuristicCounter()


def count_tokens(text: str, counter: TokenCounter | None = None) -> int:
    return (counter or DEFAULT_COUNTER).count(text)


def _longest_prefix_chars(text: str, max_tokens: int, counter: TokenCounter) -> int:
    """Length of the longest prefix whose token count stays within max_tokens."""
    if max_tokens <= 0:
        return 0
    lo, hi = 0, len(text)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if counter.count(text[:mid]) <= max_tokens:
            lo = mid
        else:
            hi = mid - 1
    return lo


def _longest_suffix_chars(text: str, max_tokens: int, counter: TokenCounter) -> int:
    if max_tokens <= 0:
        return 0
    lo, hi = 0, len(text)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if counter.count(text[len(text) - mid:]) <= max_tokens:
            lo = mid
        else:
            hi = mid - 1
    return lo


def truncate_to_fit(text: str, limit: int, counter: TokenCounter | None = None) -> str:
    """Shrink ``text`` to at most ``limit`` tokens.

    Texts already within the limit pass through unchanged. Oversized texts are
    replaced by their starting and ending sequences with the "[...]" marker in
    between; the halves are computed from (limit - marker cost) so the result
    never exceeds the limit.
    """
    counter = counter or DEFAULT_COUNTER
    if counter.count(text) <= limit:
        return text
    marker_cost = counter.count(TRUNCATION_MARKER)
    if limit <= marker_cost:
        raise DataError(f"truncation limit {limit} does not exceed the marker cost {marker_cost}")
    head_budget = (limit - marker_cost) // 2
    tail_budget = limit - marker_cost - head_budget

    head_len = _longest_prefix_chars(text, head_budget, counter)
    tail_len = _longest_suffix_chars(text, tail_budget, counter)
    head = text[:head_len]
    tail = text[len(text) - tail_len:] if tail_len else ""

    out = head + TRUNCATION_MARKER + tail
    # Token boundaries can shift at the seams; shave characters until it fits.
    while counter.count(out) > limit and (head or tail):
        if len(head) >= len(tail):
            head = head[:-1]
        else:
            tail = tail[1:]
        out = head + TRUNCATION_MARKER + tail
    return out


@dataclass(frozen=True)
class TokenBudget:
    """Token envelope available for batch content in one prompt.

    fixed_overhead covers the system message and the non-batch parts of the
    user message; per_item_overhead covers the formatting wrapper around each
    data point; completion_reserve equals the stage's max_tokens.
    """

    context_limit: int
    completion_reserve: int
    fixed_overhead: int = 0
    per_item_overhead: int = 0

    def __post_init__(self) -> None:
        if min(self.context_limit, self.completion_reserve) <= 0:
            raise ConfigError("context_limit and completion_reserve must be positive")
        if min(self.fixed_overhead, self.per_item_overhead) < 0:
            raise ConfigError("overheads must be non-negative")
        if self.content_capacity <= 0:
            raise ConfigError(
                "no room for batch content: context_limit - completion_reserve - "
                f"fixed_overhead = {self.content_capacity}"
            )

    @property
    def content_capacity(self) -> int:
        return self.context_limit - self.completion_reserve - self.fixed_overhead


@dataclass(frozen=True)
class Batch:
    """One prompt-sized slice of the corpus; texts may be truncated."""

    index: int
    items: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        if not self.items:
            raise DataError(f"batch {self.index} is empty")

    def ids(self) -> tuple[str, ...]:
        return tuple(item_id for item_id, _ in self.items)

    def content_cost(self, budget: TokenBudget, counter: TokenCounter | None = None) -> int:
        counter = counter or DEFAULT_COUNTER
        return sum(counter.count(text) + budget.per_item_overhead for _, text in self.items)


def pack_items(
    items: Sequence[tuple[str, str]],
    budget: TokenBudget,
    counter: TokenCounter | None = None,
) -> list[Batch]:
    """Greedily pack (id, text) pairs into batches within the budget.

    Items are processed shortest to longest (token count, ties broken by id
    ascending). An item whose cost would exceed the whole capacity on its own
    is truncated first, so every item lands in exactly one batch.
    """
    counter = counter or DEFAULT_COUNTER
    item_limit = budget.content_capacity - budget.per_item_overhead
    if item_limit <= 0:
        raise ConfigError("per_item_overhead leaves no room for item content")

    sized: list[tuple[int, str, str]] = []
    for item_id, text in items:
        fitted = truncate_to_fit(text, item_limit, counter)
        sized.append((counter.count(fitted), item_id, fitted))
    sized.sort(key=lambda entry: (entry[0], entry[1]))

    batches: list[Batch] = []
    current: list[tuple[str, str]] = []
    current_cost = 0
    for cost, item_id, text in sized:
        add = cost + budget.per_item_overhead
        if current and current_cost + add > budget.content_capacity:
            batches.append(Batch(index=len(batches), items=tuple(current)))
            current = []
            current_cost = 0
        current.append((item_id, text))
        current_cost += add
    if current:
        batches.append(Batch(index=len(batches), items=tuple(current)))
    return batches


def pack_batches(
    dataset: Dataset,
    budget: TokenBudget,
    counter: TokenCounter | None = None,
) -> list[Batch]:
    """Pack a dataset's points into prompt-sized batches (gold labels dropped)."""
    return pack_items([(p.id, p.text) for p in dataset.points], budget, counter)
