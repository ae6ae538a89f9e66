"""Model engines behind the endpoints.

Every engine class is selected by the model identifier configured for its
endpoint. The deterministic reference engines need no weights and exist so
the wire contract is exercisable on any machine; identifiers prefixed with
``hf:``, ``st:`` or ``whisper:`` load real models through transformers or
sentence-transformers on first use. Model load failures surface at startup,
not per request.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import unicodedata
from pathlib import Path
from typing import Optional


class EngineError(Exception):
    """Engine could not serve a request."""

    def __init__(self, message: str, code: str = "engine_error"):
        super().__init__(message)
        self.code = code


class UnsupportedLanguage(EngineError):
    def __init__(self, language: str):
        super().__init__(f"no ASR model available for language {language!r}", code="unsupported_language")


_TOKEN_RE = re.compile(r"[\w']+", re.UNICODE)

NEGATION_MARKERS = {"not", "no", "never", "without", "none"}
OPPOSITE_PAIRS = [
    ("open", "closed"), ("opened", "closed"), ("alive", "dead"), ("rose", "fell"),
    ("increased", "decreased"), ("began", "ended"), ("on", "off"), ("day", "night"),
]


def _words(text: str) -> list[str]:
    return _TOKEN_RE.findall(unicodedata.normalize("NFC", text).lower())


# --- embeddings -------------------------------------------------------------------


class HashEmbedding:
    """Deterministic unit vectors from blake2b digests; dim set by the model id."""

    def __init__(self, dim: int = 64):
        if dim < 2:
            raise EngineError(f"embedding dimension must be >= 2, got {dim}")
        self.dim = dim

    def embed(self, inputs: list[str], kind: str) -> list[list[float]]:
        return [self._vector(f"{kind}::{item}") for item in inputs]

    def _vector(self, key: str) -> list[float]:
        values: list[float] = []
        counter = 0
        while len(values) < self.dim:
            digest = hashlib.blake2b(f"{key}#{counter}".encode("utf-8"), digest_size=32).digest()
            for offset in range(0, 32, 4):
                raw = int.from_bytes(digest[offset : offset + 4], "little")
                values.append(raw / 2**31 - 1.0)
                if len(values) == self.dim:
                    break
            counter += 1
        norm = math.sqrt(sum(v * v for v in values))
        return [v / norm for v in values]


class SentenceTransformerEmbedding:
    def __init__(self, model_name: str, device: str = "cpu"):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise EngineError(f"sentence-transformers not installed: {exc}") from exc
        self.model = SentenceTransformer(model_name, device=device)

    def embed(self, inputs: list[str], kind: str) -> list[list[float]]:  # pragma: no cover - needs weights
        vectors = self.model.encode(inputs, normalize_embeddings=True, show_progress_bar=False)
        return [list(map(float, vec)) for vec in vectors]


# --- NLI ---------------------------------------------------------------------------


class LexicalNli:
    """Rule-based 3-way distribution from lexical overlap and polarity cues.

    Raw evidence scores for (entailment, neutral, contradiction) are computed
    from the overlap coefficient, negation-marker mismatch, and a small
    opposite-word list, then normalized to sum to exactly 1.
    """

    def probs(self, premise: str, hypothesis: str) -> tuple[float, float, float]:
        a, b = _words(premise), _words(hypothesis)
        set_a, set_b = set(a), set(b)
        if not set_a or not set_b:
            raw = (0.05, 0.9, 0.05)
            return self._normalize(raw)
        overlap = len(set_a & set_b) / min(len(set_a), len(set_b))
        polarity_flip = (bool(set_a & NEGATION_MARKERS) != bool(set_b & NEGATION_MARKERS)) and overlap > 0.5
        opposite = any(
            (x in set_a and y in set_b) or (y in set_a and x in set_b) for x, y in OPPOSITE_PAIRS
        )
        if opposite or polarity_flip:
            raw = (0.04, 0.16, 0.80)
        elif a == b:
            raw = (0.92, 0.06, 0.02)
        else:
            entail = 0.15 + 0.6 * overlap
            raw = (entail, 1.0 - entail - 0.05, 0.05)
        return self._normalize(raw)

    @staticmethod
    def _normalize(raw: tuple[float, float, float]) -> tuple[float, float, float]:
        total = sum(raw)
        return (raw[0] / total, raw[1] / total, raw[2] / total)


class TransformersNli:
    def __init__(self, model_name: str, device: str = "cpu"):
        try:
            from transformers import AutoModelForSequenceClassification, AutoTokenizer
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise EngineError(f"transformers not installed: {exc}") from exc
        self.tokenizer = AutoTokenizer.from_pretrained(model_name)
        self.model = AutoModelForSequenceClassification.from_pretrained(model_name).to(device)
        self.model.eval()
        self.device = device
        labels = {v.lower(): k for k, v in self.model.config.id2label.items()}
        try:
            self.order = (labels["entailment"], labels["neutral"], labels["contradiction"])
        except KeyError as exc:
            raise EngineError(f"model {model_name} lacks entailment/neutral/contradiction labels") from exc

    def probs(self, premise: str, hypothesis: str) -> tuple[float, float, float]:  # pragma: no cover - needs weights
        import torch

        with torch.inference_mode():
            inputs = self.tokenizer(premise, hypothesis, return_tensors="pt", truncation=True).to(self.device)
            logits = self.model(**inputs).logits[0]
            soft = torch.softmax(logits, dim=-1).tolist()
        probs = (soft[self.order[0]], soft[self.order[1]], soft[self.order[2]])
        total = sum(probs)
        return (probs[0] / total, probs[1] / total, probs[2] / total)


# --- graded entailment ----------------------------------------------------------------


class OverlapEntailment:
    """Graded support: containment of claim words in the evidence window."""

    def score(self, claim: str, evidence_window: str) -> float:
        claim_words = set(_words(claim))
        if not claim_words:
            return 0.0
        window_words = set(_words(evidence_window))
        return len(claim_words & window_words) / len(claim_words)


class TransformersEntailment:
    def __init__(self, model_name: str, device: str = "cpu"):
        self.nli = TransformersNli(model_name, device)

    def score(self, claim: str, evidence_window: str) -> float:  # pragma: no cover - needs weights
        entail, _, _ = self.nli.probs(evidence_window, claim)
        return max(0.0, min(1.0, entail))


# --- ASR --------------------------------------------------------------------------------


class SidecarAsr:
    """Serves transcripts from ``<media>.asr.json`` sidecars or a fixture directory."""

    def __init__(self, fixture_dir: str = "", languages: Optional[set[str]] = None):
        self.fixture_dir = Path(fixture_dir) if fixture_dir else None
        self.languages = languages

    def transcribe(self, media_path: str, language: str) -> list[dict]:
        if self.languages is not None and language not in self.languages:
            raise UnsupportedLanguage(language)
        sidecar = Path(str(media_path) + ".asr.json")
        if not sidecar.exists() and self.fixture_dir is not None:
            sidecar = self.fixture_dir / f"{Path(media_path).name}.asr.json"
            if not sidecar.exists():
                sidecar = self.fixture_dir / f"{Path(media_path).stem}.asr.json"
        if not sidecar.exists():
            raise EngineError(f"no transcript sidecar found for {media_path}", code="media_not_found")
        payload = json.loads(sidecar.read_text(encoding="utf-8"))
        return [
            {"start": float(seg["start"]), "end": float(seg["end"]), "text": str(seg["text"])}
            for seg in payload["segments"]
        ]


class WhisperAsr:
    def __init__(self, model_name: str, device: str = "cpu", languages: Optional[set[str]] = None):
        try:
            from transformers import pipeline
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise EngineError(f"transformers not installed: {exc}") from exc
        self.pipe = pipeline("automatic-speech-recognition", model=model_name, device=device, return_timestamps=True)
        self.languages = languages

    def transcribe(self, media_path: str, language: str) -> list[dict]:  # pragma: no cover - needs weights
        if self.languages is not None and language not in self.languages:
            raise UnsupportedLanguage(language)
        if not Path(media_path).exists():
            raise EngineError(f"media not found: {media_path}", code="media_not_found")
        result = self.pipe(media_path, generate_kwargs={"language": language} if language != "und" else {})
        segments = []
        for chunk in result.get("chunks", []):
            start, end = chunk.get("timestamp", (0.0, 0.0))
            segments.append({"start": float(start or 0.0), "end": float(end or 0.0), "text": chunk["text"].strip()})
        if not segments and result.get("text"):
            segments = [{"start": 0.0, "end": 0.0, "text": result["text"].strip()}]
        return segments


# --- translation ---------------------------------------------------------------------------


class MarkerTranslate:
    """Deterministic passthrough translation with a language marker."""

    def translate(self, text: str, source_lang: str) -> str:
        return f"[{source_lang}->en] {text.strip()}"


class TransformersTranslate:
    def __init__(self, model_name: str, device: str = "cpu"):
        try:
            from transformers import pipeline
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise EngineError(f"transformers not installed: {exc}") from exc
        self.pipe = pipeline("translation", model=model_name, device=device)

    def translate(self, text: str, source_lang: str) -> str:  # pragma: no cover - needs weights
        return self.pipe(text, max_length=1024)[0]["translation_text"]


# --- registry --------------------------------------------------------------------------------


_HASH_DIM_RE = re.compile(r"^hash-v1-(\d+)$")


def build_engines(config) -> dict[str, object]:
    """Instantiate one engine per enabled endpoint; raises EngineError at startup."""
    engines: dict[str, object] = {}
    for endpoint, model in config.models.items():
        if endpoint == "embeddings":
            m = _HASH_DIM_RE.match(model)
            if model == "hash-v1":
                engines[endpoint] = HashEmbedding()
            elif m:
                engines[endpoint] = HashEmbedding(dim=int(m.group(1)))
            elif model.startswith("st:"):
                engines[endpoint] = SentenceTransformerEmbedding(model[3:], config.device)
            else:
                raise EngineError(f"unknown embeddings model {model!r}")
        elif endpoint == "nli":
            if model == "lexical-v1":
                engines[endpoint] = LexicalNli()
            elif model.startswith("hf:"):
                engines[endpoint] = TransformersNli(model[3:], config.device)
            else:
                raise EngineError(f"unknown nli model {model!r}")
        elif endpoint == "entailment":
            if model == "overlap-v1":
                engines[endpoint] = OverlapEntailment()
            elif model.startswith("hf:"):
                engines[endpoint] = TransformersEntailment(model[3:], config.device)
            else:
                raise EngineError(f"unknown entailment model {model!r}")
        elif endpoint == "asr":
            if model == "sidecar-v1":
                engines[endpoint] = SidecarAsr(config.asr_fixture_dir, config.asr_languages)
            elif model.startswith("whisper:"):
                engines[endpoint] = WhisperAsr(model[8:], config.device, config.asr_languages)
            else:
                raise EngineError(f"unknown asr model {model!r}")
        elif endpoint == "translate":
            if model == "marker-v1":
                engines[endpoint] = MarkerTranslate()
            elif model.startswith("hf:"):
                engines[endpoint] = TransformersTranslate(model[3:], config.device)
            else:
                raise EngineError(f"unknown translate model {model!r}")
    return engines
