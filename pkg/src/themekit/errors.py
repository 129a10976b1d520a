"""Exception hierarchy shared across the package."""

from __future__ import annotations


class ThemekitError(Exception):
    """Base class for every error raised by this package."""


class DataError(ThemekitError):
    """Malformed or inconsistent input data (datasets, feedback, annotations)."""


class ConfigError(ThemekitError):
    """Invalid run configuration, template, or resource file."""


class BackendError(ThemekitError):
    """Failure while talking to a completion backend."""


class TransportError(BackendError):
    """Network-level failure; retried with backoff."""


class RateLimitError(BackendError):
    """Provider rate limit; retried with backoff."""


class ContextOverflowError(BackendError):
    """Request does not fit the model context window; never retried."""


class StructuredOutputError(BackendError):
    """The model kept returning output that failed schema validation."""

    def __init__(self, message: str, attempts: tuple[str, ...] = ()):
        super().__init__(message)
        self.attempts = tuple(attempts)


class StageValidationError(ThemekitError):
    """A stage response stayed invalid after the corrective re-prompt."""

    def __init__(self, message: str, stage: str | None = None, round_: int | None = None,
                 batch_index: int | None = None):
        locus = ""
        if stage is not None:
            locus = f" [stage={stage}"
            if round_ is not None:
                locus += f" round={round_}"
            if batch_index is not None:
                locus += f" batch={batch_index}"
            locus += "]"
        super().__init__(message + locus)
        self.stage = stage
        self.round = round_
        self.batch_index = batch_index


class ApprovalRequiredError(ThemekitError):
    """Classification was requested before the merged theme set was approved."""


class StoreError(ThemekitError):
    """Run directory is unreadable, corrupted, or inconsistent."""


class StoreLockedError(StoreError):
    """Another writer holds this run's advisory lock."""


class DigestMismatchError(StoreError):
    """The run's dataset no longer matches the digest recorded at creation."""
