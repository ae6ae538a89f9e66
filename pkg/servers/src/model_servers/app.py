"""FastAPI application exposing the backend wire contract."""

from __future__ import annotations

import logging
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .config import AdapterConfig
from .engines import EngineError, UnsupportedLanguage, build_engines

logger = logging.getLogger(__name__)


class EmbeddingsRequest(BaseModel):
    model: str = ""
    input: list[str] = Field(min_length=1)
    kind: str = "text"


class NliRequest(BaseModel):
    model: str = ""
    premise: str
    hypothesis: str


class EvidencePayload(BaseModel):
    video_id: str = ""
    span: tuple[float, float] = (0.0, 0.0)
    transcript_window: str = ""


class EntailmentRequest(BaseModel):
    model: str = ""
    claim: str
    evidence: EvidencePayload = Field(default_factory=EvidencePayload)


class AsrRequest(BaseModel):
    model: str = ""
    media_path: str
    language: str = "und"


class TranslateRequest(BaseModel):
    model: str = ""
    text: str
    source_lang: str = "und"


def _error_response(status: int, code: str, message: str, role: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": {"code": code, "message": message, "role": role}})


def create_app(config: Optional[AdapterConfig] = None) -> FastAPI:
    config = config or AdapterConfig()
    config.validate()
    engines = build_engines(config)  # model load failures surface here, at startup

    app = FastAPI(title="pipeline model adapters", version="0.1.0")

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return _error_response(400, "invalid_request", str(exc.errors()[:2]), request.url.path)

    @app.exception_handler(EngineError)
    async def engine_handler(request: Request, exc: EngineError):
        status = 422 if isinstance(exc, UnsupportedLanguage) else 500
        if exc.code == "media_not_found":
            status = 404
        return _error_response(status, exc.code, str(exc), request.url.path)

    def engine_for(endpoint: str):
        engine = engines.get(endpoint)
        if engine is None:
            raise EngineError(f"endpoint {endpoint!r} is not enabled on this adapter", code="endpoint_disabled")
        return engine

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "endpoints": sorted(engines.keys()), "models": dict(sorted(config.models.items()))}

    @app.post("/v1/embeddings")
    def embeddings(req: EmbeddingsRequest):
        if len(req.input) > config.max_batch_size:
            raise EngineError(f"batch of {len(req.input)} exceeds max_batch_size {config.max_batch_size}", code="batch_too_large")
        if req.kind not in ("text", "image"):
            raise EngineError(f"kind must be 'text' or 'image', got {req.kind!r}", code="invalid_request")
        vectors = engine_for("embeddings").embed(req.input, req.kind)
        return {"data": [{"index": i, "embedding": vec} for i, vec in enumerate(vectors)]}

    @app.post("/v1/nli")
    def nli(req: NliRequest):
        entail, neutral, contra = engine_for("nli").probs(req.premise, req.hypothesis)
        return {"entailment": entail, "neutral": neutral, "contradiction": contra}

    @app.post("/v1/entailment")
    def entailment(req: EntailmentRequest):
        score = engine_for("entailment").score(req.claim, req.evidence.transcript_window)
        return {"score": max(0.0, min(1.0, float(score)))}

    @app.post("/v1/asr")
    def asr(req: AsrRequest):
        segments = engine_for("asr").transcribe(req.media_path, req.language)
        return {"segments": segments, "language": req.language}

    @app.post("/v1/translate")
    def translate(req: TranslateRequest):
        return {"text": engine_for("translate").translate(req.text, req.source_lang)}

    return app
