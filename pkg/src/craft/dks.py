"""Query-conditioned keyframe selection.

Candidate frames are scored against the query with image-text cosine
similarity, then a budgeted subset is chosen by recursive temporal bisection:
each segment's budget is split between its halves proportionally to the sum
of their top min-shifted scores, with both halves guaranteed at least one
frame. The result concentrates budget where relevance is high while keeping
temporal coverage, is deterministic, and runs in O(n log n).

Selection is applied independently per (query, video): the same video can
yield different clips for different queries.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .errors import BackendContractError, InvalidInputError, ResolutionError
from .ingest import FrameRecord, VideoChunk

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 128
DEFAULT_FPS = 1.0


@dataclass(frozen=True)
class FrameScore:
    frame_index: int
    timestamp_s: float
    score: float
    frame_path: str = ""

    def to_dict(self) -> dict:
        return {
            "frame_index": self.frame_index,
            "timestamp_s": self.timestamp_s,
            "score": self.score,
            "frame_path": self.frame_path,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrameScore":
        return cls(int(d["frame_index"]), float(d["timestamp_s"]), float(d["score"]), d.get("frame_path", ""))


@dataclass
class KeyframeClip:
    query_id: str
    video_id: str
    selected: list[FrameScore]
    budget: int

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "video_id": self.video_id,
            "budget": self.budget,
            "selected": [f.to_dict() for f in self.selected],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KeyframeClip":
        return cls(d["query_id"], d["video_id"], [FrameScore.from_dict(f) for f in d["selected"]], int(d["budget"]))


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    if len(a) != len(b):
        raise BackendContractError(f"embedding dimension mismatch: {len(a)} vs {len(b)}")
    norm_a = math.sqrt(sum(x * x for x in a))
    norm_b = math.sqrt(sum(x * x for x in b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise BackendContractError("zero-norm embedding cannot be normalized")
    return sum(x * y for x, y in zip(a, b)) / (norm_a * norm_b)


def score_frames(candidates: Sequence[FrameRecord], query_text: str, embed) -> list[FrameScore]:
    """Cosine-score every candidate frame against the query embedding."""
    if not candidates:
        raise InvalidInputError("score_frames requires a non-empty candidate list")
    _check_strictly_increasing(candidates)
    query_vec = embed.embed_text([query_text])[0]
    frame_vecs = embed.embed_image([c.frame_path for c in candidates])
    scores = []
    for cand, vec in zip(candidates, frame_vecs):
        scores.append(FrameScore(cand.frame_index, cand.timestamp_s, cosine(vec, query_vec), cand.frame_path))
    return scores


def _check_strictly_increasing(candidates: Sequence) -> None:
    prev = None
    for cand in candidates:
        t = cand.timestamp_s
        if prev is not None and t <= prev:
            raise InvalidInputError(f"candidate timestamps must be strictly increasing, got {t} after {prev}")
        prev = t


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def _argmax_frame(frames: Sequence[FrameScore]) -> FrameScore:
    # Highest score; earliest timestamp, then lowest index on ties.
    return min(frames, key=lambda f: (-f.score, f.timestamp_s, f.frame_index))


def _top_weight(frames: Sequence[FrameScore], k: int, global_min: float) -> float:
    shifted = sorted((f.score - global_min for f in frames), reverse=True)
    return sum(shifted[:k])


def _adaptive_split(frames: list[FrameScore], budget: int, global_min: float) -> list[FrameScore]:
    if budget <= 0:
        return []
    if len(frames) <= budget:
        return list(frames)
    if budget == 1:
        return [_argmax_frame(frames)]

    mid_time = (frames[0].timestamp_s + frames[-1].timestamp_s) / 2.0
    left = [f for f in frames if f.timestamp_s < mid_time]
    right = [f for f in frames if f.timestamp_s >= mid_time]
    if not left or not right:
        # Degenerate geometry; fall back to score order while keeping temporal sort.
        chosen = sorted(frames, key=lambda f: (-f.score, f.timestamp_s, f.frame_index))[:budget]
        return sorted(chosen, key=lambda f: f.timestamp_s)

    top_k = math.ceil(budget / 2)
    w_left = _top_weight(left, top_k, global_min)
    w_right = _top_weight(right, top_k, global_min)
    if w_left + w_right == 0.0:
        raw = math.ceil(budget / 2)
    else:
        raw = _round_half_up(budget * w_left / (w_left + w_right))

    # Keep every sub-budget feasible: >= 1 per half and no more than the half holds.
    lo = max(1, budget - len(right))
    hi = min(budget - 1, len(left))
    budget_left = min(max(raw, lo), hi)
    budget_right = budget - budget_left
    return _adaptive_split(left, budget_left, global_min) + _adaptive_split(right, budget_right, global_min)


def select_keyframes(scores: Sequence[FrameScore], budget: int, *, query_id: str = "", video_id: str = "") -> KeyframeClip:
    """Pick ``min(budget, len(scores))`` frames, relevance-weighted with coverage.

    Deterministic; output is in strict temporal order. For budget >= 2, both
    temporal halves of the candidate range contribute at least one frame
    whenever both contain candidates.
    """
    if budget < 0:
        raise InvalidInputError(f"budget must be >= 0, got {budget}")
    frames = sorted(scores, key=lambda f: f.timestamp_s)
    _check_strictly_increasing(frames)
    if budget == 0 or not frames:
        return KeyframeClip(query_id, video_id, [], budget)
    global_min = min(f.score for f in frames)
    chosen = _adaptive_split(frames, budget, global_min)
    chosen = sorted(chosen, key=lambda f: f.timestamp_s)
    return KeyframeClip(query_id, video_id, chosen, budget)


class ClipStore:
    """Clip cache under ``<root>/dks/<query_id>/<video_id>.json``."""

    def __init__(self, root: Path):
        self.dir = Path(root) / "dks"

    def path_for(self, query_id: str, video_id: str) -> Path:
        return self.dir / query_id / f"{video_id}.json"

    def get(self, query_id: str, video_id: str) -> Optional[KeyframeClip]:
        path = self.path_for(query_id, video_id)
        if not path.exists():
            return None
        return KeyframeClip.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def put(self, clip: KeyframeClip) -> None:
        path = self.path_for(clip.query_id, clip.video_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(clip.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8")
        tmp.replace(path)


@dataclass(frozen=True)
class VisualInput:
    """Resolved visual evidence for one (query, video) pair."""

    kind: str  # "clip" or "chunks"
    video_id: str
    clip: Optional[KeyframeClip] = None
    chunks: tuple[VideoChunk, ...] = ()


def resolve_visual_input(query_id: str, video_id: str, clip_store: ClipStore, chunk_store) -> VisualInput:
    """Prefer the keyframe clip; fall back to raw chunks. Never blocks on clip absence."""
    clip = clip_store.get(query_id, video_id)
    if clip is not None and clip.selected:
        return VisualInput(kind="clip", video_id=video_id, clip=clip)
    chunks = chunk_store.get(video_id)
    if chunks:
        return VisualInput(kind="chunks", video_id=video_id, chunks=tuple(chunks))
    raise ResolutionError(f"no keyframe clip and no chunks available for video {video_id!r} (query {query_id!r})")
