"""Adapter configuration: which model serves each endpoint."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

ENDPOINTS = ("embeddings", "nli", "entailment", "asr", "translate")

DEFAULT_MODELS = {
    "embeddings": "hash-v1-64",
    "nli": "lexical-v1",
    "entailment": "overlap-v1",
    "asr": "sidecar-v1",
    "translate": "marker-v1",
}


@dataclass
class AdapterConfig:
    port: int = 8901
    host: str = "127.0.0.1"
    device: str = "cpu"
    max_batch_size: int = 64
    # model identifier per enabled endpoint; an endpoint absent from the
    # mapping is disabled and returns 404
    models: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_MODELS))
    # languages the ASR endpoint accepts; None accepts everything
    asr_languages: Optional[set[str]] = None
    # directory searched for ASR sidecar fixtures (sidecar-v1 engine)
    asr_fixture_dir: str = ""

    def validate(self) -> None:
        if self.port <= 0:
            raise ValueError(f"port must be positive, got {self.port}")
        if self.max_batch_size < 1:
            raise ValueError(f"max_batch_size must be >= 1, got {self.max_batch_size}")
        for endpoint, model in self.models.items():
            if endpoint not in ENDPOINTS:
                raise ValueError(f"unknown endpoint {endpoint!r}; expected one of {ENDPOINTS}")
            if not model:
                raise ValueError(f"endpoint {endpoint!r} is enabled but has no model identifier")
