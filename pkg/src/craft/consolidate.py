"""Query-level consolidation: pooling, reranking, report generation, citation merging.

Refined claims from a query's videos are concatenated with provenance intact
(no semantic deduplication), rescored against their source evidence, and the
top-k form the claim packet handed to a text-only consolidator. The generated
statements pass a numeral guard (no numbers or 4-digit years absent from the
packet), identical statements are merged with their citation sets unioned,
chunk-level citations are remapped to parent video IDs, and the result is
written as deterministic JSONL.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import promptdoc
from .errors import InvalidInputError, RemapError
from .extraction import AtomicClaim
from .ingest import ChunkMap
from .prompts import load_prompt
from .transcripts import normalize_tokens

logger = logging.getLogger(__name__)

DEFAULT_TOP_K = 50

_NUMERAL_RE = re.compile(r"\d+(?:\.\d+)?")

CONSOLIDATE_INSTRUCTION = load_prompt("consolidate_instruction_v1.txt")


@dataclass
class EvidencePool:
    query_id: str
    records: list[AtomicClaim]

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class ClaimPacket:
    query_id: str
    ranked: list[AtomicClaim]


@dataclass
class ReportStatement:
    text: str
    citations: set[str]

    def to_dict(self) -> dict:
        return {"text": self.text, "citations": sorted(self.citations)}

    @classmethod
    def from_dict(cls, d: dict) -> "ReportStatement":
        return cls(text=d["text"], citations=set(d["citations"]))


@dataclass
class Report:
    query_id: str
    statements: list[ReportStatement]

    def to_dict(self) -> dict:
        return {"query_id": self.query_id, "report": [s.to_dict() for s in self.statements]}

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        return cls(query_id=d["query_id"], statements=[ReportStatement.from_dict(s) for s in d["report"]])


def pool_evidence(per_video_sets: dict[str, list[AtomicClaim]], query_id: str, video_order: Sequence[str]) -> EvidencePool:
    """Concatenate per-video claim sets in video order; provenance is kept verbatim."""
    records: list[AtomicClaim] = []
    for video_id in video_order:
        records.extend(per_video_sets.get(video_id, []))
    return EvidencePool(query_id=query_id, records=records)


def rescore_and_rank(
    pool: EvidencePool,
    scorer: Callable[[AtomicClaim], float],
    k: int = DEFAULT_TOP_K,
    warnings: Optional[list] = None,
) -> ClaimPacket:
    """Rescore every record and keep the top-k by score.

    Ranking, not thresholding: low-scoring records are never removed outright,
    only outranked. A scorer failure keeps the record's last critic-loop score.
    Ties break by claim_id ascending for a stable order.
    """
    if k < 1:
        raise InvalidInputError(f"packet size k must be >= 1, got {k}")
    for record in pool.records:
        try:
            record.support_score = float(scorer(record))
        except Exception as exc:  # noqa: BLE001 - degraded mode in the contract
            msg = f"rescoring failed for claim {record.claim_id}; keeping previous score: {exc}"
            logger.warning(msg)
            if warnings is not None:
                warnings.append(msg)
            if record.support_score is None:
                record.support_score = 0.0
    ranked = sorted(pool.records, key=lambda c: (-(c.support_score or 0.0), c.claim_id))
    return ClaimPacket(query_id=pool.query_id, ranked=ranked[: min(k, len(ranked))])


def _packet_prompt(packet: ClaimPacket, query_text: str, correction: str = "") -> str:
    parts = [
        f"# {promptdoc.SECTION_TASK}",
        CONSOLIDATE_INSTRUCTION,
        "",
        f"# {promptdoc.SECTION_QUERY}",
        query_text,
        "",
        f"# {promptdoc.SECTION_PACKET}",
    ]
    for claim in packet.ranked:
        parts.append(promptdoc.render_packet_line(claim.claim_id, claim.line(), claim.source_video_id))
    if correction:
        parts.append("")
        parts.append(f"# {promptdoc.SECTION_CORRECTION}")
        parts.append(correction)
    return "\n".join(parts)


def _numerals(text: str) -> set[str]:
    return set(_NUMERAL_RE.findall(text))


def _parse_statements(raw: str, known_sources: set[str]) -> tuple[list[ReportStatement], list[str]]:
    statements: list[ReportStatement] = []
    problems: list[str] = []
    for line in raw.splitlines():
        line = line.strip()
        if not line:
            continue
        parsed = promptdoc.parse_statement_line(line)
        if parsed is None:
            problems.append(f"unparseable statement line: {line!r}")
            continue
        text, cites = parsed
        cites = [c for c in cites if c in known_sources]
        if not cites:
            problems.append(f"statement cites no packet claim: {line!r}")
            continue
        statements.append(ReportStatement(text=text, citations=set(cites)))
    return statements, problems


def generate_report(
    packet: ClaimPacket,
    llm,
    query_text: str = "",
    retry_on_guard: bool = True,
    warnings: Optional[list] = None,
) -> Report:
    """Turn the claim packet into report statements with a numeral guard.

    Statements containing a numeral (including 4-digit years) that appears
    nowhere in the packet text trigger one constrained retry; a statement
    still violating the guard is dropped with a warning.
    """
    if not packet.ranked:
        msg = f"empty claim packet for query {packet.query_id}; emitting empty report"
        logger.warning(msg)
        if warnings is not None:
            warnings.append(msg)
        return Report(query_id=packet.query_id, statements=[])

    packet_numerals: set[str] = set()
    for claim in packet.ranked:
        packet_numerals |= _numerals(claim.text)
    known_sources = {c.source_video_id for c in packet.ranked}

    raw = llm.chat_complete(_packet_prompt(packet, query_text), "consolidate")
    statements, problems = _parse_statements(raw, known_sources)

    guarded: list[ReportStatement] = []
    violations: list[ReportStatement] = []
    for stmt in statements:
        if _numerals(stmt.text) - packet_numerals:
            violations.append(stmt)
        else:
            guarded.append(stmt)

    if (violations or problems) and retry_on_guard:
        notes = [f"statement introduced numbers not present in the packet: {s.text!r}" for s in violations]
        notes.extend(problems)
        correction = "Rewrite, fixing these issues; repeat only facts and numbers from the packet:\n" + "\n".join(notes)
        raw_retry = llm.chat_complete(_packet_prompt(packet, query_text, correction), "consolidate")
        retry_statements, retry_problems = _parse_statements(raw_retry, known_sources)
        guarded = []
        for stmt in retry_statements:
            if _numerals(stmt.text) - packet_numerals:
                msg = f"statement dropped by numeral guard after retry: {stmt.text!r}"
                logger.warning(msg)
                if warnings is not None:
                    warnings.append(msg)
            else:
                guarded.append(stmt)
        for problem in retry_problems:
            msg = f"statement dropped after retry: {problem}"
            logger.warning(msg)
            if warnings is not None:
                warnings.append(msg)
    elif violations or problems:
        for stmt in violations:
            msg = f"statement dropped by numeral guard: {stmt.text!r}"
            logger.warning(msg)
            if warnings is not None:
                warnings.append(msg)
        for problem in problems:
            msg = f"statement dropped: {problem}"
            logger.warning(msg)
            if warnings is not None:
                warnings.append(msg)

    return Report(query_id=packet.query_id, statements=guarded)


def _statement_key(text: str) -> str:
    return " ".join(normalize_tokens(text))


def merge_citations(report: Report) -> Report:
    """Merge statements with identical normalized text; citations are unioned.

    First-occurrence order and first-occurrence surface text are preserved.
    Idempotent.
    """
    merged: dict[str, ReportStatement] = {}
    order: list[str] = []
    for stmt in report.statements:
        key = _statement_key(stmt.text)
        if key in merged:
            merged[key].citations |= stmt.citations
        else:
            merged[key] = ReportStatement(text=stmt.text, citations=set(stmt.citations))
            order.append(key)
    return Report(query_id=report.query_id, statements=[merged[k] for k in order])


def remap_ids(report: Report, chunk_map: ChunkMap) -> Report:
    """Rewrite chunk-level citations to parent video IDs, then re-merge.

    Every citation must be a known chunk ID or an already-parent ID; anything
    else is a remap error listing the offending citation.
    """
    parents = chunk_map.parents
    remapped_statements: list[ReportStatement] = []
    for stmt in report.statements:
        new_cites: set[str] = set()
        for cite in stmt.citations:
            if cite in chunk_map.entries:
                new_cites.add(chunk_map.entries[cite])
            elif cite in parents:
                new_cites.add(cite)
            else:
                raise RemapError(f"citation {cite!r} is neither a known chunk nor a parent video ID")
        remapped_statements.append(ReportStatement(text=stmt.text, citations=new_cites))
    return merge_citations(Report(query_id=report.query_id, statements=remapped_statements))


def write_jsonl(reports: Sequence[Report], path: Path) -> None:
    """One line per query: ``{"query_id": ..., "report": [{"text", "citations"}]}``.

    Citations are sorted and key order is fixed, so serialization is
    deterministic byte-for-byte.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for report in reports:
            fh.write(json.dumps(report.to_dict(), ensure_ascii=False) + "\n")
    tmp.replace(path)


def read_jsonl(path: Path) -> list[Report]:
    reports = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                reports.append(Report.from_dict(json.loads(line)))
    return reports
