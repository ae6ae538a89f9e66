"""Exception hierarchy shared across the pipeline.

CLI exit codes map onto these classes: validation problems exit 2,
backend failures exit 3, missing stage prerequisites exit 4.
"""

from __future__ import annotations


class CraftError(Exception):
    """Base class for all pipeline errors."""


class InvalidInputError(CraftError):
    """An operation was called with inputs violating its contract."""


class ConfigError(CraftError):
    """Configuration file or override violates a documented invariant."""


class IngestError(CraftError):
    """Chunking or frame extraction failed; carries the command diagnostic."""


class TranscriptionError(CraftError):
    """Both ASR backends failed for a video."""


class UnsupportedLanguageError(CraftError):
    """Signal from the primary ASR backend that the caller must fall back."""


class BackendError(CraftError):
    """A backend call failed after retries; carries role and id context."""

    def __init__(self, message: str, *, role: str = "", query_id: str = "", video_id: str = ""):
        super().__init__(message)
        self.role = role
        self.query_id = query_id
        self.video_id = video_id


class BackendContractError(BackendError):
    """A backend returned a response violating its wire contract."""


class PersonaError(CraftError):
    """Persona synthesis failed."""


class ExtractionError(CraftError):
    """Claim extraction failed for a (query, video) pair."""

    def __init__(self, message: str, *, query_id: str = "", video_id: str = ""):
        super().__init__(message)
        self.query_id = query_id
        self.video_id = video_id


class ResolutionError(CraftError):
    """Neither a keyframe clip nor chunks exist for a requested video."""


class RemapError(CraftError):
    """A report citation is neither a known chunk nor a known parent ID."""


class PrerequisiteError(CraftError):
    """A stage was run before the stage that produces its inputs."""


class EvaluationError(CraftError):
    """The evaluation judge backend failed."""
