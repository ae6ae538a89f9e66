"""Shared backend plumbing: config, call counting, evidence references.

Every model the pipeline touches sits behind one of six roles (embedding,
chat generation, entailment scoring, 3-way NLI, ASR, translation). Each role
has a deterministic in-process mock and a remote HTTP client; both sides of
a role expose the same methods, so the engine never knows which it holds.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field
from typing import Any, Optional, Protocol

from ..errors import ConfigError


def prompt_fingerprint(prompt: str) -> str:
    """Stable short fingerprint used to key scripted mock responses."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class EvidenceRef:
    """Reference to the evidence a claim is scored against.

    Carries the cited chunk, the claim's timestamp span, and the transcript
    window overlapping that span (original text plus English translation when
    present). Remote scorers receive the whole reference and may ground the
    score however they choose; the mock uses the transcript window.
    """

    video_id: str
    start_s: float
    end_s: float
    transcript_window: str = ""

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "span": [self.start_s, self.end_s],
            "transcript_window": self.transcript_window,
        }


@dataclass
class BackendConfig:
    """Configuration for one backend role."""

    kind: str = "mock"  # "mock" or "remote"
    endpoint: str = ""
    model_name: str = ""
    timeout_s: float = 30.0
    max_retries: int = 2
    script_path: str = ""
    options: dict[str, Any] = field(default_factory=dict)

    def validate(self, role: str) -> None:
        if self.kind not in ("mock", "remote"):
            raise ConfigError(f"backends.{role}.kind must be 'mock' or 'remote', got {self.kind!r}")
        if self.kind == "remote" and not self.endpoint:
            raise ConfigError(f"backends.{role}.endpoint is required for remote backends")
        if self.timeout_s <= 0:
            raise ConfigError(f"backends.{role}.timeout_s must be positive")
        if self.max_retries < 0:
            raise ConfigError(f"backends.{role}.max_retries must be >= 0")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "endpoint": self.endpoint,
            "model_name": self.model_name,
            "timeout_s": self.timeout_s,
            "max_retries": self.max_retries,
            "script_path": self.script_path,
            "options": dict(self.options),
        }


class CallCounter:
    """Thread-safe per-role call counter, surfaced in the run manifest."""

    def __init__(self):
        self._lock = threading.Lock()
        self._counts: dict[str, int] = {}

    def hit(self, role: str) -> None:
        with self._lock:
            self._counts[role] = self._counts.get(role, 0) + 1

    def count(self, role: str) -> int:
        with self._lock:
            return self._counts.get(role, 0)

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return dict(sorted(self._counts.items()))

    def total(self) -> int:
        with self._lock:
            return sum(self._counts.values())

    def reset(self) -> None:
        with self._lock:
            self._counts.clear()


class EmbeddingBackend(Protocol):
    def embed_text(self, texts: list[str]) -> list[list[float]]: ...
    def embed_image(self, refs: list[str]) -> list[list[float]]: ...


class ChatBackend(Protocol):
    def chat_complete(self, prompt: str, role: str) -> str: ...


class EntailmentBackend(Protocol):
    def entailment_score(self, claim_text: str, evidence: EvidenceRef) -> float: ...


class NliBackend(Protocol):
    def nli_probs(self, premise: str, hypothesis: str) -> tuple[float, float, float]: ...


class AsrBackend(Protocol):
    supported_languages: Optional[set[str]]
    def transcribe(self, media_path: str, language: str) -> list[tuple[float, float, str]]: ...


class TranslateBackend(Protocol):
    def translate(self, text: str, source_lang: str) -> str: ...


@dataclass
class BackendSet:
    """The full bundle of role backends handed to pipeline stages."""

    embedding: Any
    chat: Any
    entailment: Any
    nli: Any
    asr_primary: Any
    asr_fallback: Any
    translator: Any
    counter: CallCounter = field(default_factory=CallCounter)
