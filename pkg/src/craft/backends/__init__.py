"""Backend contracts with interchangeable mock and remote implementations."""

from .base import (
    BackendConfig,
    BackendSet,
    CallCounter,
    EvidenceRef,
    prompt_fingerprint,
)
from .mocks import (
    MockAsr,
    MockChat,
    MockEmbedding,
    MockEntailment,
    MockNli,
    MockTranslate,
    build_mock_backends,
)
from .remote import (
    RemoteAsr,
    RemoteChat,
    RemoteEmbedding,
    RemoteEntailment,
    RemoteNli,
    RemoteTranslate,
    RemoteTransport,
    build_remote_backends,
)

__all__ = [
    "BackendConfig",
    "BackendSet",
    "CallCounter",
    "EvidenceRef",
    "prompt_fingerprint",
    "MockAsr",
    "MockChat",
    "MockEmbedding",
    "MockEntailment",
    "MockNli",
    "MockTranslate",
    "build_mock_backends",
    "RemoteAsr",
    "RemoteChat",
    "RemoteEmbedding",
    "RemoteEntailment",
    "RemoteNli",
    "RemoteTranslate",
    "RemoteTransport",
    "build_remote_backends",
]
