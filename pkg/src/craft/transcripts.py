"""Per-video transcripts: ASR with language fallback, translation, degeneracy filtering.

Each video is transcribed once and cached under ``<cache>/transcripts/<video_id>.json``.
Degenerate transcripts (repetition loops the ASR backends sometimes emit on noisy or
low-resource audio) are detected with three deterministic rules and excluded from any
downstream prompt, though they are still cached with their verdict so reruns do not
re-invoke the backend.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .errors import InvalidInputError, TranscriptionError, UnsupportedLanguageError

logger = logging.getLogger(__name__)

# Degeneracy rule defaults; all overridable through PipelineConfig.
TTR_THRESHOLD = 0.18
TTR_MIN_TOKENS = 20
MAX_TOKEN_RUN = 8
TRIGRAM_SHARE_THRESHOLD = 0.40


def tokenize(text: str) -> list[str]:
    """Whitespace tokens after Unicode NFC normalization and lowercasing.

    This is the single tokenizer used by the degeneracy rules, claim
    canonicalization, and ROUGE-L; no language-specific segmentation is
    attempted, so unsegmented scripts yield long tokens.
    """
    if not text:
        return []
    return unicodedata.normalize("NFC", text).lower().split()


_TOKEN_TRIM_RE = re.compile(r"^\W+|\W+$", re.UNICODE)


def normalize_tokens(text: str) -> list[str]:
    """tokenize() plus per-token punctuation stripping; empties removed.

    Used wherever two texts are compared for sameness: claim canonicalization,
    citation merging, and the overlap-based mock scorers.
    """
    out = []
    for raw in tokenize(text):
        tok = _TOKEN_TRIM_RE.sub("", raw)
        if tok:
            out.append(tok)
    return out


def type_token_ratio(tokens: Sequence[str]) -> float:
    """Unique tokens divided by total tokens, in (0, 1]."""
    if not tokens:
        raise InvalidInputError("type_token_ratio requires a non-empty token list")
    return len(set(tokens)) / len(tokens)


def _longest_run(tokens: Sequence[str]) -> int:
    best = 0
    run = 0
    prev = None
    for tok in tokens:
        run = run + 1 if tok == prev else 1
        prev = tok
        best = max(best, run)
    return best


def _max_trigram_share(tokens: Sequence[str]) -> float:
    """Share of the most frequent trigram among all overlapping trigrams."""
    if len(tokens) < 3:
        return 0.0
    trigrams = Counter(tuple(tokens[i : i + 3]) for i in range(len(tokens) - 2))
    denom = max(len(tokens) - 2, 1)
    return max(trigrams.values()) / denom


@dataclass(frozen=True)
class DegeneracyVerdict:
    flagged: bool
    reason: str  # one of: none, low_ttr, token_run, trigram_dominance
    metric_value: float

    def to_dict(self) -> dict:
        return {"flagged": self.flagged, "reason": self.reason, "metric_value": self.metric_value}

    @classmethod
    def from_dict(cls, d: dict) -> "DegeneracyVerdict":
        return cls(flagged=bool(d["flagged"]), reason=d["reason"], metric_value=float(d["metric_value"]))


def is_degenerate(
    text: str,
    *,
    ttr_threshold: float = TTR_THRESHOLD,
    ttr_min_tokens: int = TTR_MIN_TOKENS,
    max_token_run: int = MAX_TOKEN_RUN,
    trigram_share: float = TRIGRAM_SHARE_THRESHOLD,
) -> DegeneracyVerdict:
    """Flag repetitive ASR output. Rules are checked in order; first match wins.

    1. low_ttr: at least ``ttr_min_tokens`` tokens and type-token ratio below
       ``ttr_threshold``.
    2. token_run: some token repeated at least ``max_token_run`` times consecutively.
    3. trigram_dominance: the most frequent overlapping 3-token phrase accounts for
       at least ``trigram_share`` of all overlapping trigrams.
    """
    tokens = tokenize(text)
    if not tokens:
        return DegeneracyVerdict(False, "none", 0.0)

    if len(tokens) >= ttr_min_tokens:
        ttr = type_token_ratio(tokens)
        if ttr < ttr_threshold:
            return DegeneracyVerdict(True, "low_ttr", ttr)

    run = _longest_run(tokens)
    if run >= max_token_run:
        return DegeneracyVerdict(True, "token_run", float(run))

    if len(tokens) >= 3:
        share = _max_trigram_share(tokens)
        if share >= trigram_share:
            return DegeneracyVerdict(True, "trigram_dominance", share)

    return DegeneracyVerdict(False, "none", 0.0)


@dataclass
class Transcript:
    video_id: str
    language: str
    segments: list[tuple[float, float, str]]
    backend_used: str  # "primary" or "fallback"
    english_text: Optional[str] = None
    degeneracy: DegeneracyVerdict = field(default_factory=lambda: DegeneracyVerdict(False, "none", 0.0))

    @property
    def full_text(self) -> str:
        return " ".join(seg[2] for seg in self.segments)

    @property
    def is_degenerate(self) -> bool:
        return self.degeneracy.flagged

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "language": self.language,
            "segments": [[s, e, t] for s, e, t in self.segments],
            "full_text": self.full_text,
            "english_text": self.english_text,
            "backend_used": self.backend_used,
            "degeneracy": self.degeneracy.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Transcript":
        return cls(
            video_id=d["video_id"],
            language=d["language"],
            segments=[(float(s), float(e), t) for s, e, t in d["segments"]],
            backend_used=d["backend_used"],
            english_text=d.get("english_text"),
            degeneracy=DegeneracyVerdict.from_dict(d["degeneracy"]),
        )


def _validate_segments(segments: Sequence[tuple[float, float, str]]) -> None:
    prev_end = None
    for start, end, _ in segments:
        if prev_end is not None and start < prev_end:
            raise InvalidInputError(f"transcript segments overlap or are unordered at {start}")
        prev_end = end


class TranscriptStore:
    """File cache under ``<root>/transcripts``, one JSON document per video.

    Writers serialize per video_id so concurrent requests for the same video
    coalesce into a single backend call.
    """

    def __init__(self, root: Path):
        self.dir = Path(root) / "transcripts"
        self.dir.mkdir(parents=True, exist_ok=True)
        self._locks_guard = threading.Lock()
        self._locks: dict[str, threading.Lock] = {}

    def path_for(self, video_id: str) -> Path:
        return self.dir / f"{video_id}.json"

    def lock_for(self, video_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(video_id, threading.Lock())

    def get(self, video_id: str) -> Optional[Transcript]:
        path = self.path_for(video_id)
        if not path.exists():
            return None
        return Transcript.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def put(self, transcript: Transcript) -> None:
        path = self.path_for(transcript.video_id)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(transcript.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8")
        tmp.replace(path)


def transcribe(meta, asr_primary, asr_fallback, store: TranscriptStore, *, degeneracy_kwargs: Optional[dict] = None) -> Transcript:
    """Obtain the cached transcript for a video, invoking ASR at most once.

    The primary backend is used iff the video's language is in its declared
    supported set; otherwise the fallback backend transcribes. A primary
    backend may also signal an unsupported language at call time, which
    triggers the same fallback. Degenerate output is cached with its verdict.
    """
    cached = store.get(meta.video_id)
    if cached is not None:
        return cached

    lock = store.lock_for(meta.video_id)
    with lock:
        cached = store.get(meta.video_id)
        if cached is not None:
            return cached

        segments = None
        backend_used = None
        if meta.language in asr_primary.supported_languages:
            try:
                segments = asr_primary.transcribe(meta.media_path, meta.language)
                backend_used = "primary"
            except UnsupportedLanguageError:
                segments = None
        if segments is None:
            try:
                segments = asr_fallback.transcribe(meta.media_path, meta.language)
                backend_used = "fallback"
            except UnsupportedLanguageError as exc:
                raise TranscriptionError(f"no ASR backend supports language {meta.language!r} for {meta.video_id}") from exc

        segments = [(float(s), float(e), str(t)) for s, e, t in segments]
        _validate_segments(segments)
        transcript = Transcript(
            video_id=meta.video_id,
            language=meta.language,
            segments=segments,
            backend_used=backend_used,
        )
        transcript.degeneracy = is_degenerate(transcript.full_text, **(degeneracy_kwargs or {}))
        if transcript.is_degenerate:
            logger.warning(
                "transcript flagged degenerate video_id=%s reason=%s metric=%.4f",
                meta.video_id, transcript.degeneracy.reason, transcript.degeneracy.metric_value,
            )
        store.put(transcript)
        return transcript


def translate_if_needed(transcript: Transcript, translator, store: Optional[TranscriptStore] = None, warnings: Optional[list] = None) -> Transcript:
    """Fill ``english_text``: identity for English, translator output otherwise.

    Degenerate transcripts are skipped entirely (they never reach a prompt).
    Translator failure leaves english_text absent and records a warning rather
    than failing the video.
    """
    if transcript.is_degenerate:
        return transcript
    if transcript.english_text is not None:
        return transcript

    if transcript.language == "en" or transcript.language.startswith("en-"):
        transcript.english_text = transcript.full_text
    else:
        try:
            transcript.english_text = translator.translate(transcript.full_text, transcript.language)
        except Exception as exc:  # noqa: BLE001 - degraded mode is part of the contract
            msg = f"translation failed for {transcript.video_id}: {exc}"
            logger.warning(msg)
            if warnings is not None:
                warnings.append(msg)
            return transcript
    if store is not None:
        store.put(transcript)
    return transcript
