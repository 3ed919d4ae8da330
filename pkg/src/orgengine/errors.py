"""Shared exception types."""

from __future__ import annotations


class OrgEngineError(Exception):
    """Base class for engine errors."""


class ConfigError(OrgEngineError):
    """Invalid scenario configuration: parse failure, dangling reference,
    or a model invariant violated at ingestion time."""


class NonConvergenceError(OrgEngineError):
    """Value iteration hit max_iter with residual above tolerance.

    Carries the last iterate so callers can inspect or resume.
    """

    def __init__(self, message: str, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class FactorizationError(OrgEngineError):
    """Kernel matrix factorization failed despite jitter."""

    def __init__(self, message: str, condition_number: float | None = None):
        super().__init__(message)
        self.condition_number = condition_number


class ToolError(OrgEngineError):
    """Raised inside tool implementations; surfaced as an error-status result."""


class RevisionError(OrgEngineError):
    """A QA revision callback raised; carries the correction trace so far."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace
