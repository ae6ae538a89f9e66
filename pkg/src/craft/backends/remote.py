"""HTTP clients for remote inference services.

One shared transport handles retries: transient transport errors and 5xx
responses are retried with exponential backoff up to ``max_retries``, 4xx
responses fail immediately. Generation goes through a chat-completions
endpoint so any OpenAI-compatible server works; embedding, NLI, entailment,
ASR, and translation use the dedicated minimal endpoints documented in
``contract/WIRE_CONTRACT.md``.
"""

from __future__ import annotations

import logging
import threading
import time
from typing import Any, Optional

import httpx

from ..errors import BackendContractError, BackendError, UnsupportedLanguageError
from .base import BackendConfig, BackendSet, CallCounter, EvidenceRef

logger = logging.getLogger(__name__)

_DISTRIBUTION_TOLERANCE = 1e-6


class RemoteTransport:
    """POST JSON with bounded retries; shareable across concurrent tasks.

    ``max_concurrency`` caps in-flight requests per transport; all calls are
    idempotent by design so retries never duplicate side effects.
    """

    def __init__(
        self,
        base_url: str,
        timeout_s: float = 30.0,
        max_retries: int = 2,
        backoff_s: float = 0.1,
        transport: Optional[httpx.BaseTransport] = None,
        max_concurrency: int = 8,
    ):
        self.base_url = base_url.rstrip("/")
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self._semaphore = threading.BoundedSemaphore(max(1, max_concurrency))
        self._client = httpx.Client(base_url=self.base_url, timeout=timeout_s, transport=transport)

    def post(self, path: str, payload: dict, role: str) -> dict:
        attempt = 0
        while True:
            try:
                with self._semaphore:
                    response = self._client.post(path, json=payload)
            except httpx.HTTPError as exc:
                if attempt >= self.max_retries:
                    raise BackendError(f"{role} request failed after {attempt + 1} attempts: {exc}", role=role) from exc
                self._sleep(attempt, role, str(exc))
                attempt += 1
                continue

            if response.status_code >= 500:
                if attempt >= self.max_retries:
                    raise BackendError(
                        f"{role} request failed after {attempt + 1} attempts: HTTP {response.status_code}", role=role
                    )
                self._sleep(attempt, role, f"HTTP {response.status_code}")
                attempt += 1
                continue
            if response.status_code >= 400:
                detail = _error_payload(response)
                if detail.get("code") == "unsupported_language":
                    raise UnsupportedLanguageError(detail.get("message", "unsupported language"))
                raise BackendError(
                    f"{role} request rejected: HTTP {response.status_code} {detail.get('message', '')}".strip(),
                    role=role,
                )
            try:
                return response.json()
            except ValueError as exc:
                raise BackendContractError(f"{role} returned non-JSON body", role=role) from exc

    def _sleep(self, attempt: int, role: str, reason: str) -> None:
        delay = self.backoff_s * (2**attempt)
        logger.warning("retrying %s after %s (attempt %d, sleeping %.2fs)", role, reason, attempt + 1, delay)
        time.sleep(delay)

    def close(self) -> None:
        self._client.close()


def _error_payload(response: httpx.Response) -> dict:
    try:
        body = response.json()
    except ValueError:
        return {"message": response.text[:200]}
    if isinstance(body, dict):
        err = body.get("error")
        if isinstance(err, dict):
            return err
        if isinstance(err, str):
            return {"message": err}
        if "detail" in body:
            detail = body["detail"]
            return detail if isinstance(detail, dict) else {"message": str(detail)}
    return {"message": str(body)[:200]}


def _require(payload: dict, key: str, role: str) -> Any:
    if key not in payload:
        raise BackendContractError(f"{role} response missing key {key!r}", role=role)
    return payload[key]


class RemoteChat:
    def __init__(self, transport: RemoteTransport, model_name: str, max_tokens: int = 2048, counter: Optional[CallCounter] = None):
        self.transport = transport
        self.model_name = model_name
        self.max_tokens = max_tokens
        self.counter = counter

    def chat_complete(self, prompt: str, role: str) -> str:
        if self.counter:
            self.counter.hit(f"chat.{role}")
        payload = {
            "model": self.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
            "max_tokens": self.max_tokens,
        }
        body = self.transport.post("/v1/chat/completions", payload, role=f"chat.{role}")
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendContractError(f"chat.{role} response malformed: {exc}", role=f"chat.{role}") from exc


class RemoteEmbedding:
    def __init__(self, transport: RemoteTransport, model_name: str, counter: Optional[CallCounter] = None):
        self.transport = transport
        self.model_name = model_name
        self.counter = counter
        self._dim: Optional[int] = None

    def _embed(self, inputs: list[str], kind: str, role: str) -> list[list[float]]:
        payload = {"model": self.model_name, "input": inputs, "kind": kind}
        body = self.transport.post("/v1/embeddings", payload, role=role)
        data = _require(body, "data", role)
        vectors = [list(map(float, row["embedding"])) for row in data]
        if len(vectors) != len(inputs):
            raise BackendContractError(f"{role} returned {len(vectors)} vectors for {len(inputs)} inputs", role=role)
        for vec in vectors:
            if self._dim is None:
                self._dim = len(vec)
            elif len(vec) != self._dim:
                raise BackendContractError(
                    f"{role} embedding dimension drifted from {self._dim} to {len(vec)}", role=role
                )
        return vectors

    def embed_text(self, texts: list[str]) -> list[list[float]]:
        if self.counter:
            self.counter.hit("embed_text")
        return self._embed(texts, "text", "embed_text")

    def embed_image(self, refs: list[str]) -> list[list[float]]:
        if self.counter:
            self.counter.hit("embed_image")
        return self._embed(refs, "image", "embed_image")


class RemoteEntailment:
    def __init__(self, transport: RemoteTransport, model_name: str, counter: Optional[CallCounter] = None):
        self.transport = transport
        self.model_name = model_name
        self.counter = counter

    def entailment_score(self, claim_text: str, evidence: EvidenceRef) -> float:
        if self.counter:
            self.counter.hit("entailment")
        payload = {"model": self.model_name, "claim": claim_text, "evidence": evidence.to_dict()}
        body = self.transport.post("/v1/entailment", payload, role="entailment")
        score = float(_require(body, "score", "entailment"))
        if not 0.0 <= score <= 1.0:
            raise BackendContractError(f"entailment score {score} outside [0, 1]", role="entailment")
        return score


class RemoteNli:
    def __init__(self, transport: RemoteTransport, model_name: str, counter: Optional[CallCounter] = None):
        self.transport = transport
        self.model_name = model_name
        self.counter = counter

    def nli_probs(self, premise: str, hypothesis: str) -> tuple[float, float, float]:
        if self.counter:
            self.counter.hit("nli")
        payload = {"model": self.model_name, "premise": premise, "hypothesis": hypothesis}
        body = self.transport.post("/v1/nli", payload, role="nli")
        probs = (
            float(_require(body, "entailment", "nli")),
            float(_require(body, "neutral", "nli")),
            float(_require(body, "contradiction", "nli")),
        )
        if any(p < 0 or p > 1 for p in probs) or abs(sum(probs) - 1.0) > _DISTRIBUTION_TOLERANCE:
            raise BackendContractError(f"nli probabilities {probs} are not a distribution", role="nli")
        return probs


class RemoteAsr:
    def __init__(
        self,
        transport: RemoteTransport,
        model_name: str,
        supported_languages: Optional[set[str]] = None,
        role_label: str = "asr.primary",
        counter: Optional[CallCounter] = None,
    ):
        self.transport = transport
        self.model_name = model_name
        self.supported_languages = set(supported_languages) if supported_languages is not None else None
        self.role_label = role_label
        self.counter = counter

    def transcribe(self, media_path: str, language: str) -> list[tuple[float, float, str]]:
        if self.counter:
            self.counter.hit(self.role_label)
        if self.supported_languages is not None and language not in self.supported_languages:
            raise UnsupportedLanguageError(f"{self.role_label} does not support language {language!r}")
        payload = {"model": self.model_name, "media_path": media_path, "language": language}
        body = self.transport.post("/v1/asr", payload, role=self.role_label)
        segments = _require(body, "segments", self.role_label)
        return [(float(seg["start"]), float(seg["end"]), str(seg["text"])) for seg in segments]


class RemoteTranslate:
    def __init__(self, transport: RemoteTransport, model_name: str, counter: Optional[CallCounter] = None):
        self.transport = transport
        self.model_name = model_name
        self.counter = counter

    def translate(self, text: str, source_lang: str) -> str:
        if self.counter:
            self.counter.hit("translate")
        payload = {"model": self.model_name, "text": text, "source_lang": source_lang}
        body = self.transport.post("/v1/translate", payload, role="translate")
        return str(_require(body, "text", "translate"))


def build_remote_backends(
    configs: dict[str, BackendConfig],
    counter: Optional[CallCounter] = None,
    max_concurrency: int = 8,
) -> BackendSet:
    """Assemble remote clients, one transport per distinct endpoint."""
    counter = counter or CallCounter()
    transports: dict[str, RemoteTransport] = {}

    def transport_for(role: str) -> RemoteTransport:
        cfg = configs[role]
        cfg.validate(role)
        key = f"{cfg.endpoint}|{cfg.timeout_s}|{cfg.max_retries}"
        if key not in transports:
            transports[key] = RemoteTransport(
                cfg.endpoint, timeout_s=cfg.timeout_s, max_retries=cfg.max_retries, max_concurrency=max_concurrency
            )
        return transports[key]

    def model(role: str) -> str:
        return configs[role].model_name

    primary_langs = configs["asr_primary"].options.get("supported_languages")
    return BackendSet(
        embedding=RemoteEmbedding(transport_for("embedding"), model("embedding"), counter=counter),
        chat=RemoteChat(transport_for("chat"), model("chat"), counter=counter),
        entailment=RemoteEntailment(transport_for("entailment"), model("entailment"), counter=counter),
        nli=RemoteNli(transport_for("nli"), model("nli"), counter=counter),
        asr_primary=RemoteAsr(
            transport_for("asr_primary"),
            model("asr_primary"),
            supported_languages=set(primary_langs) if primary_langs else None,
            role_label="asr.primary",
            counter=counter,
        ),
        asr_fallback=RemoteAsr(
            transport_for("asr_fallback"), model("asr_fallback"), supported_languages=None, role_label="asr.fallback", counter=counter
        ),
        translator=RemoteTranslate(transport_for("translate"), model("translate"), counter=counter),
        counter=counter,
    )
