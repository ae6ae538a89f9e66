"""Atomic claim extraction for one (query, video) pair.

The prompt document assembles, in fixed order: persona, query, the resolved
visual input (keyframe clip or raw chunks), the original-language transcript,
its English translation, and the output-format instruction. Degenerate
transcripts are omitted entirely and replaced by an explicit absence
sentinel. Model output is parsed against a rigid one-claim-per-line grammar::

    [<modality>|<start>-<end>] <single declarative sentence.>

Lines failing validation are returned as diagnostics with a reason, never
silently dropped; the critic loop feeds them back as repair material.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import promptdoc
from .dks import VisualInput
from .errors import ExtractionError, InvalidInputError, PersonaError
from .prompts import load_prompt
from .transcripts import Transcript, normalize_tokens

logger = logging.getLogger(__name__)

MODALITIES = ("visual", "on_screen_text", "transcript", "speech")
PERSONA_TITLE_MAX_TOKENS = 12

_CLAIM_LINE_RE = re.compile(r"^\[([a-z_]+)\|(\d+(?:\.\d+)?)-(\d+(?:\.\d+)?)\]\s+(.+)$")

OUTPUT_FORMAT_INSTRUCTION = load_prompt("extraction_output_format_v1.txt")


@dataclass(frozen=True)
class PersonaQuery:
    query_id: str
    query_text: str
    video_ids: tuple[str, ...]
    persona_title: str = ""
    persona_background: str = ""

    @property
    def has_persona(self) -> bool:
        return bool(self.persona_title.strip()) and bool(self.persona_background.strip())


@dataclass
class AtomicClaim:
    claim_id: str
    query_id: str
    source_video_id: str
    start_s: float
    end_s: float
    modality: str
    text: str
    support_score: Optional[float] = None

    @property
    def span(self) -> tuple[float, float]:
        return (self.start_s, self.end_s)

    def line(self) -> str:
        return promptdoc.render_claim_line(self.modality, self.start_s, self.end_s, self.text)

    def to_dict(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "query_id": self.query_id,
            "source_video_id": self.source_video_id,
            "span": [self.start_s, self.end_s],
            "modality": self.modality,
            "text": self.text,
            "support_score": self.support_score,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AtomicClaim":
        return cls(
            claim_id=d["claim_id"],
            query_id=d["query_id"],
            source_video_id=d["source_video_id"],
            start_s=float(d["span"][0]),
            end_s=float(d["span"][1]),
            modality=d["modality"],
            text=d["text"],
            support_score=d.get("support_score"),
        )


def canonical_key(text: str, start_s: float, end_s: float, modality: str) -> str:
    """Identity used for claim IDs and the critic's fixed-point test.

    Text is token-normalized and spans are rounded to 0.1 s so cosmetic
    rewording or float jitter does not register as a changed claim.
    """
    return f"{' '.join(normalize_tokens(text))}|{round(start_s, 1)}|{round(end_s, 1)}|{modality}"


def claim_id_for(key: str, occurrence: int) -> str:
    """Stable claim ID from the canonical key; duplicates get an ordinal suffix."""
    base = "c" + hashlib.sha1(key.encode("utf-8")).hexdigest()[:10]
    return base if occurrence == 0 else f"{base}-{occurrence}"


@dataclass(frozen=True)
class RejectedLine:
    line: str
    reason: str  # bad_format | unknown_modality | bad_span | span_out_of_bounds | multi_sentence | no_terminator


def _terminator_count(text: str) -> int:
    count = 0
    for i, ch in enumerate(text):
        if ch not in ".!?":
            continue
        prev_digit = i > 0 and text[i - 1].isdigit()
        next_digit = i + 1 < len(text) and text[i + 1].isdigit()
        if prev_digit and next_digit:
            continue  # decimal point
        count += 1
    return count


def parse_claims(
    raw_text: str,
    query_id: str,
    video_id: str,
    max_duration_s: Optional[float] = None,
) -> tuple[list[AtomicClaim], list[RejectedLine]]:
    """Parse model output into claims plus per-line rejection diagnostics."""
    claims: list[AtomicClaim] = []
    rejected: list[RejectedLine] = []
    occurrences: dict[str, int] = {}

    for line in raw_text.splitlines():
        line = line.strip()
        if not line:
            continue
        m = _CLAIM_LINE_RE.match(line)
        if not m:
            rejected.append(RejectedLine(line, "bad_format"))
            continue
        modality, start_raw, end_raw, text = m.group(1), m.group(2), m.group(3), m.group(4).strip()
        if modality not in MODALITIES:
            rejected.append(RejectedLine(line, "unknown_modality"))
            continue
        start_s, end_s = float(start_raw), float(end_raw)
        if not start_s < end_s:
            rejected.append(RejectedLine(line, "bad_span"))
            continue
        if max_duration_s is not None and end_s > max_duration_s + 1e-9:
            rejected.append(RejectedLine(line, "span_out_of_bounds"))
            continue
        terminators = _terminator_count(text)
        if terminators == 0:
            rejected.append(RejectedLine(line, "no_terminator"))
            continue
        if terminators > 1:
            rejected.append(RejectedLine(line, "multi_sentence"))
            continue
        key = canonical_key(text, start_s, end_s, modality)
        occ = occurrences.get(key, 0)
        occurrences[key] = occ + 1
        claims.append(
            AtomicClaim(
                claim_id=claim_id_for(key, occ),
                query_id=query_id,
                source_video_id=video_id,
                start_s=start_s,
                end_s=end_s,
                modality=modality,
                text=text,
            )
        )

    if not claims:
        logger.warning("zero parseable claims for query=%s video=%s (%d lines rejected)", query_id, video_id, len(rejected))
    return claims, rejected


def serialize_claims(claims: Sequence[AtomicClaim]) -> str:
    return "\n".join(c.line() for c in claims)


def _render_visual_section(visual: VisualInput) -> list[str]:
    lines = [f"kind: {visual.kind}", f"video: {visual.video_id}"]
    if visual.kind == "clip" and visual.clip is not None:
        for frame in visual.clip.selected:
            lines.append(promptdoc.render_frame_line(frame.timestamp_s, frame.frame_path))
    else:
        for chunk in visual.chunks:
            lines.append(f"chunk: {chunk.chunk_id} [{chunk.start_s}-{chunk.end_s})")
    return lines


def build_prompt(
    pq: PersonaQuery,
    visual: VisualInput,
    transcript: Optional[Transcript],
    *,
    feedback_text: str = "",
    previous_claims: Sequence[AtomicClaim] = (),
) -> str:
    """Assemble the extraction prompt document.

    The English-translation section appears only for non-English transcripts
    that carry one; for English videos the original section already is the
    English text. Feedback and previous-claims sections are present only in
    critic re-extraction rounds.
    """
    parts: list[str] = []
    parts.append(f"# {promptdoc.SECTION_PERSONA}")
    parts.append(f"Title: {pq.persona_title}")
    parts.append(f"Background: {pq.persona_background}")
    parts.append("")
    parts.append(f"# {promptdoc.SECTION_QUERY}")
    parts.append(pq.query_text)
    parts.append("")
    parts.append(f"# {promptdoc.SECTION_VISUAL}")
    parts.extend(_render_visual_section(visual))
    parts.append("")

    usable = transcript is not None and not transcript.is_degenerate
    if usable:
        parts.append(f"# {promptdoc.SECTION_TRANSCRIPT_ORIGINAL}, {transcript.language})")
        for start, end, text in transcript.segments:
            parts.append(promptdoc.render_segment_line(start, end, text))
        if transcript.english_text is not None and transcript.language != "en":
            parts.append("")
            parts.append(f"# {promptdoc.SECTION_TRANSCRIPT_ENGLISH}")
            parts.append(transcript.english_text)
    else:
        parts.append(f"# {promptdoc.SECTION_TRANSCRIPT_ORIGINAL})")
        parts.append(promptdoc.TRANSCRIPT_ABSENT_SENTINEL)
    parts.append("")

    if feedback_text or previous_claims:
        parts.append(f"# {promptdoc.SECTION_FEEDBACK}")
        parts.append(feedback_text.strip())
        parts.append("")
        parts.append(f"# {promptdoc.SECTION_PREVIOUS}")
        for claim in previous_claims:
            parts.append(promptdoc.render_previous_claim_line(claim.claim_id, claim.line()))
        parts.append("")

    parts.append(f"# {promptdoc.SECTION_OUTPUT_FORMAT}")
    parts.append(OUTPUT_FORMAT_INSTRUCTION)
    return "\n".join(parts)


def extract_claims(prompt: str, vlm, *, query_id: str, video_id: str) -> str:
    """One vision-language call per invocation; returns the raw model text."""
    try:
        return vlm.chat_complete(prompt, "extract")
    except Exception as exc:
        raise ExtractionError(
            f"claim extraction failed for query={query_id} video={video_id}: {exc}",
            query_id=query_id,
            video_id=video_id,
        ) from exc


def synthesize_persona(query_text: str, sample_claims: Optional[Sequence[str]], llm) -> tuple[str, str]:
    """Generate (title, background) for queries shipped without a persona."""
    if not query_text or not query_text.strip():
        raise InvalidInputError("cannot synthesize a persona for an empty query")
    parts = [
        f"# {promptdoc.SECTION_TASK}",
        "Invent a plausible persona for the analyst asking the query below.",
        "Respond with exactly two lines:",
        "TITLE: <persona title, at most 12 words>",
        "BACKGROUND: <one-paragraph persona background>",
        "",
        f"# {promptdoc.SECTION_QUERY}",
        query_text,
    ]
    if sample_claims:
        parts.append("")
        parts.append("# Sample Claims")
        parts.extend(sample_claims)
    try:
        raw = llm.chat_complete("\n".join(parts), "persona")
    except Exception as exc:
        raise PersonaError(f"persona synthesis failed: {exc}") from exc

    title, background = "", ""
    for line in raw.splitlines():
        line = line.strip()
        if line.upper().startswith("TITLE:"):
            title = line[6:].strip()
        elif line.upper().startswith("BACKGROUND:"):
            background = line[11:].strip()
    if not title or not background:
        raise PersonaError(f"persona response missing TITLE/BACKGROUND lines: {raw[:120]!r}")
    title_tokens = title.split()
    if len(title_tokens) > PERSONA_TITLE_MAX_TOKENS:
        title = " ".join(title_tokens[:PERSONA_TITLE_MAX_TOKENS])
    return title, background


def load_queries(path: Path) -> list[PersonaQuery]:
    """Read the persona-query manifest (JSONL, one query per line)."""
    queries: list[PersonaQuery] = []
    seen: set[str] = set()
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            query_id = row["query_id"]
            if query_id in seen:
                raise InvalidInputError(f"duplicate query_id {query_id!r} at {path}:{lineno}")
            seen.add(query_id)
            queries.append(
                PersonaQuery(
                    query_id=query_id,
                    query_text=row["query_text"],
                    video_ids=tuple(row["video_ids"]),
                    persona_title=row.get("persona_title", ""),
                    persona_background=row.get("persona_background", ""),
                )
            )
    return queries
