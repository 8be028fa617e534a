"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class EveError(Exception):
    """Base class for engine errors."""


class UsageError(EveError):
    """Bad invocation: invalid flags, missing inputs, refused overwrite."""


class IntegrityError(EveError):
    """A run directory is corrupted, locked, or inconsistent."""

    def __init__(self, message: str, problems: list[str] | None = None):
        super().__init__(message)
        self.problems = problems or []


class LockError(IntegrityError):
    """Another orchestrator holds the run lock."""


class PluginError(EveError):
    """An external agent or evaluator broke its contract fatally."""


class SeedEvaluationError(PluginError):
    """The seed solver could not be evaluated; the run cannot start."""


class BoundaryRefusedError(EveError):
    """Refused to extract a solver from a workspace that failed its boundary check."""
