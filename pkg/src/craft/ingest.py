"""Video ingestion: bounded-duration chunking and frame-candidate manifests.

Chunking is greedy: full-length chunks of ``max_chunk_s`` seconds with a short
final remainder, so chunks partition ``[0, duration)`` exactly. Chunk IDs are
``<parent_id>#<zero-padded 3-digit index>``, which makes lexicographic order
equal temporal order. Pixel work is delegated to a configurable external
command; the engine only computes timestamps and records the manifest.
"""

from __future__ import annotations

import json
import logging
import math
import re
import shlex
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .errors import IngestError, InvalidInputError

logger = logging.getLogger(__name__)

MAX_CHUNK_SECONDS = 120.0
_CHUNK_ID_RE = re.compile(r"^(?P<parent>.+)#(?P<index>\d{3})$")


@dataclass(frozen=True)
class VideoMeta:
    video_id: str
    duration_s: float
    language: str = "und"
    media_path: str = ""

    def __post_init__(self):
        object.__setattr__(self, "duration_s", float(self.duration_s))
        if self.duration_s < 0:
            raise InvalidInputError(f"duration_s must be non-negative, got {self.duration_s}")


@dataclass(frozen=True)
class VideoChunk:
    chunk_id: str
    parent_video_id: str
    start_s: float
    end_s: float

    def __post_init__(self):
        object.__setattr__(self, "start_s", float(self.start_s))
        object.__setattr__(self, "end_s", float(self.end_s))

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    def to_dict(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "parent_video_id": self.parent_video_id,
            "start_s": self.start_s,
            "end_s": self.end_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VideoChunk":
        return cls(d["chunk_id"], d["parent_video_id"], float(d["start_s"]), float(d["end_s"]))


class ChunkMap:
    """Total mapping from emitted chunk IDs to their parent video IDs."""

    def __init__(self, entries: Optional[dict[str, str]] = None):
        self.entries: dict[str, str] = dict(entries or {})

    def add_chunks(self, chunks: Iterable[VideoChunk]) -> None:
        for chunk in chunks:
            existing = self.entries.get(chunk.chunk_id)
            if existing is not None and existing != chunk.parent_video_id:
                raise InvalidInputError(
                    f"chunk {chunk.chunk_id} already mapped to {existing}, cannot remap to {chunk.parent_video_id}"
                )
            self.entries[chunk.chunk_id] = chunk.parent_video_id

    @property
    def parents(self) -> set[str]:
        return set(self.entries.values())

    def to_dict(self) -> dict:
        return {"entries": dict(sorted(self.entries.items()))}

    @classmethod
    def from_dict(cls, d: dict) -> "ChunkMap":
        return cls(d["entries"])


def chunk_id_for(parent_video_id: str, index: int) -> str:
    return f"{parent_video_id}#{index:03d}"


def looks_like_chunk_id(candidate: str) -> bool:
    return _CHUNK_ID_RE.match(candidate) is not None


def chunk_video(meta: VideoMeta, max_chunk_s: float = MAX_CHUNK_SECONDS) -> list[VideoChunk]:
    """Split a video into ordered chunks of at most ``max_chunk_s`` seconds."""
    if meta.duration_s <= 0:
        raise InvalidInputError(f"cannot chunk {meta.video_id}: duration {meta.duration_s} is not positive")
    if max_chunk_s <= 0:
        raise InvalidInputError(f"max_chunk_s must be positive, got {max_chunk_s}")

    chunks = []
    index = 0
    start = 0.0
    while start < meta.duration_s:
        end = min(start + max_chunk_s, meta.duration_s)
        chunks.append(VideoChunk(chunk_id_for(meta.video_id, index), meta.video_id, start, end))
        start = end
        index += 1
    return chunks


def parent_of(chunk_id: str, chunk_map: ChunkMap) -> str:
    """Parent video ID for a chunk ID; identity for non-chunk-format IDs."""
    parent = chunk_map.entries.get(chunk_id)
    if parent is not None:
        return parent
    if looks_like_chunk_id(chunk_id):
        raise KeyError(f"chunk ID {chunk_id!r} not present in the chunk map")
    return chunk_id


@dataclass(frozen=True)
class FrameRecord:
    frame_index: int
    timestamp_s: float
    frame_path: str

    def to_dict(self) -> dict:
        return {"frame_index": self.frame_index, "timestamp_s": self.timestamp_s, "frame_path": self.frame_path}

    @classmethod
    def from_dict(cls, d: dict) -> "FrameRecord":
        return cls(int(d["frame_index"]), float(d["timestamp_s"]), d["frame_path"])


def frame_timestamps(start_s: float, end_s: float, rate_fps: float) -> list[float]:
    """Candidate timestamps ``start + k/fps`` strictly inside ``[start, end)``."""
    if rate_fps <= 0:
        raise InvalidInputError(f"rate_fps must be positive, got {rate_fps}")
    count = math.ceil((end_s - start_s) * rate_fps)
    step = 1.0 / rate_fps
    stamps = []
    for k in range(count):
        t = start_s + k * step
        if t >= end_s:
            break
        stamps.append(t)
    return stamps


def render_frame_command(template: str, *, input_path: str, start_s: float, end_s: float, rate_fps: float, outdir: str) -> list[str]:
    """Fill the command template and split it into argv.

    Recognized placeholders: {input} {start} {end} {fps} {outdir} and
    {python}, which expands to the running interpreter so bundled fixture
    configs stay portable.
    """
    rendered = template.format(
        input=input_path, start=start_s, end=end_s, fps=rate_fps, outdir=outdir, python=sys.executable
    )
    return shlex.split(rendered)


def extract_frame_manifest(
    chunk: VideoChunk,
    rate_fps: float,
    *,
    media_path: str,
    frame_cmd: str,
    outdir: Path,
) -> list[FrameRecord]:
    """Materialize candidate frames for one chunk via the external command.

    The command receives the media path, the chunk window, the sampling rate,
    and an output directory; it must write one file per sampled frame named
    ``frame_<6-digit index>.jpg``. The manifest pairs each expected timestamp
    with its frame path.
    """
    media = Path(media_path)
    if not media.exists():
        raise FileNotFoundError(f"media file not found for chunk {chunk.chunk_id}: {media_path}")

    stamps = frame_timestamps(chunk.start_s, chunk.end_s, rate_fps)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    argv = render_frame_command(
        frame_cmd, input_path=str(media), start_s=chunk.start_s, end_s=chunk.end_s, rate_fps=rate_fps, outdir=str(outdir)
    )
    proc = subprocess.run(argv, capture_output=True, text=True)
    if proc.returncode != 0:
        diagnostic = (proc.stderr or proc.stdout or "").strip()
        raise IngestError(
            f"frame extraction failed for chunk {chunk.chunk_id} (exit {proc.returncode}): {diagnostic}"
        )

    records = []
    for k, t in enumerate(stamps):
        records.append(FrameRecord(k, t, str(outdir / f"frame_{k:06d}.jpg")))
    return records


def write_frame_manifest(records: list[FrameRecord], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")


def read_frame_manifest(path: Path) -> list[FrameRecord]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(FrameRecord.from_dict(json.loads(line)))
    return records


def load_corpus_manifest(path: Path) -> list[VideoMeta]:
    """Read the corpus manifest (JSONL, one video per line).

    Relative media paths are resolved against the manifest's directory.
    Duplicate video IDs are rejected.
    """
    path = Path(path)
    base = path.parent
    metas: list[VideoMeta] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            video_id = row["video_id"]
            if video_id in seen:
                raise InvalidInputError(f"duplicate video_id {video_id!r} at {path}:{lineno}")
            seen.add(video_id)
            media = row.get("media_path", "")
            if media and not Path(media).is_absolute():
                media = str((base / media).resolve())
            metas.append(
                VideoMeta(
                    video_id=video_id,
                    duration_s=float(row["duration_s"]),
                    language=row.get("language", "und"),
                    media_path=media,
                )
            )
    return metas
