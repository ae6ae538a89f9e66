"""Prompt document structure shared by prompt builders and the mock models.

Prompts are plain text organized in ``# Header`` sections with line-oriented
bodies, so deterministic mock backends (and scripted fixtures) can parse the
exact document a real model would receive. Renderers and parsers for every
line format live here; nothing in this module touches backends or IO.
"""

from __future__ import annotations

import re
from typing import Optional

SECTION_PERSONA = "Persona"
SECTION_QUERY = "Query"
SECTION_VISUAL = "Visual Input"
SECTION_TRANSCRIPT_ORIGINAL = "Transcript (original"  # prefix; full header carries the language
SECTION_TRANSCRIPT_ENGLISH = "Transcript (English)"
SECTION_FEEDBACK = "Critic Feedback"
SECTION_PREVIOUS = "Previous Claims"
SECTION_OUTPUT_FORMAT = "Output Format"
SECTION_TASK = "Task"
SECTION_PACKET = "Claim Packet"
SECTION_CORRECTION = "Correction"

TRANSCRIPT_ABSENT_SENTINEL = "[no transcript available]"

_HEADER_RE = re.compile(r"^# (.+)$")
_SEGMENT_RE = re.compile(r"^\[(\d+(?:\.\d+)?)-(\d+(?:\.\d+)?)\]\s+(.*)$")
_FRAME_RE = re.compile(r"^frame: t=(\d+(?:\.\d+)?) ref=(.*)$")
_PREVIOUS_RE = re.compile(r"^\(([^)]+)\)\s+(.*)$")
_PACKET_RE = re.compile(r"^\(([^)]+)\)\s+(\[.*\].*?)\s+<-\s+(\S+)$")
_STATEMENT_RE = re.compile(r"^(.*?)\s*\[sources:\s*([^\]]*)\]\s*$")


def split_sections(prompt: str) -> list[tuple[str, str]]:
    """Split a prompt into ordered (header, body) pairs."""
    sections: list[tuple[str, list[str]]] = []
    current: Optional[list[str]] = None
    for line in prompt.splitlines():
        m = _HEADER_RE.match(line)
        if m:
            current = []
            sections.append((m.group(1).strip(), current))
        elif current is not None:
            current.append(line)
    return [(title, "\n".join(body).strip()) for title, body in sections]


def find_section(sections: list[tuple[str, str]], title_prefix: str) -> Optional[tuple[str, str]]:
    for title, body in sections:
        if title.startswith(title_prefix):
            return title, body
    return None


def render_segment_line(start_s: float, end_s: float, text: str) -> str:
    return f"[{start_s}-{end_s}] {text}"


def parse_segment_lines(body: str) -> list[tuple[float, float, str]]:
    out = []
    for line in body.splitlines():
        m = _SEGMENT_RE.match(line.strip())
        if m:
            out.append((float(m.group(1)), float(m.group(2)), m.group(3)))
    return out


def render_frame_line(timestamp_s: float, ref: str) -> str:
    return f"frame: t={timestamp_s} ref={ref}"


def parse_frame_lines(body: str) -> list[tuple[float, str]]:
    out = []
    for line in body.splitlines():
        m = _FRAME_RE.match(line.strip())
        if m:
            out.append((float(m.group(1)), m.group(2)))
    return out


def render_claim_line(modality: str, start_s: float, end_s: float, text: str) -> str:
    return f"[{modality}|{start_s}-{end_s}] {text}"


def render_previous_claim_line(claim_id: str, claim_line: str) -> str:
    return f"({claim_id}) {claim_line}"


def parse_previous_claim_lines(body: str) -> list[tuple[str, str]]:
    out = []
    for line in body.splitlines():
        m = _PREVIOUS_RE.match(line.strip())
        if m:
            out.append((m.group(1), m.group(2)))
    return out


def render_packet_line(claim_id: str, claim_line: str, source_video_id: str) -> str:
    return f"({claim_id}) {claim_line} <- {source_video_id}"


def parse_packet_lines(body: str) -> list[tuple[str, str, str]]:
    """Packet rows as (claim_id, claim_line, source_video_id)."""
    out = []
    for line in body.splitlines():
        m = _PACKET_RE.match(line.strip())
        if m:
            out.append((m.group(1), m.group(2), m.group(3)))
    return out


def render_statement_line(text: str, citations: list[str]) -> str:
    return f"{text} [sources: {', '.join(citations)}]"


def parse_statement_line(line: str) -> Optional[tuple[str, list[str]]]:
    m = _STATEMENT_RE.match(line.strip())
    if not m:
        return None
    text = m.group(1).strip()
    cites = [c.strip() for c in m.group(2).split(",") if c.strip()]
    return (text, cites) if text else None


# Feedback line grammar: the critic writes these, re-extraction prompts embed
# them, and the mock extractor interprets them as repair instructions.
def render_weak_line(claim_id: str, claim_line: str) -> str:
    return f"WEAK {claim_id} :: {claim_line}"


def render_dropped_line(claim_id: str, claim_line: str) -> str:
    return f"DROPPED {claim_id} :: {claim_line}"


def render_contradiction_line(claim_id_a: str, claim_id_b: str, hint: str) -> str:
    return f"CONTRADICTION {claim_id_a} {claim_id_b} :: {hint}"


def render_rejected_line(reason: str, line: str) -> str:
    return f"REJECTED {reason} :: {line}"


def parse_feedback_lines(body: str) -> dict[str, list[tuple[str, ...]]]:
    """Group feedback rows by kind: weak, dropped, contradiction, rejected."""
    out: dict[str, list[tuple[str, ...]]] = {"weak": [], "dropped": [], "contradiction": [], "rejected": []}
    for line in body.splitlines():
        line = line.strip()
        if line.startswith("WEAK ") and " :: " in line:
            head, tail = line[5:].split(" :: ", 1)
            out["weak"].append((head.strip(), tail))
        elif line.startswith("DROPPED ") and " :: " in line:
            head, tail = line[8:].split(" :: ", 1)
            out["dropped"].append((head.strip(), tail))
        elif line.startswith("CONTRADICTION ") and " :: " in line:
            head, tail = line[14:].split(" :: ", 1)
            parts = head.split()
            if len(parts) == 2:
                out["contradiction"].append((parts[0], parts[1], tail))
        elif line.startswith("REJECTED ") and " :: " in line:
            head, tail = line[9:].split(" :: ", 1)
            out["rejected"].append((head.strip(), tail))
    return out
