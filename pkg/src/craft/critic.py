"""Critic-guided claim refinement.

Each (query, video) claim set is refined for up to four rounds. A round
scores every claim with the graded entailment backend and drops the
unsupported band, screens all claim pairs with a 3-way NLI model as a
high-recall contradiction filter, and lets an adjudicator confirm or reject
the screened pairs. If anything warrants repair (weak-band claims or
confirmed contradictions), the round's report is rendered as feedback and
the claims are re-extracted; the loop stops early when the claim set reaches
a fixed point under canonicalization.

The adjudicator fails open: an unparseable or failed adjudication keeps both
claims, since the screen intentionally over-generates candidates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from . import promptdoc
from .errors import BackendContractError
from .extraction import AtomicClaim, RejectedLine, canonical_key

logger = logging.getLogger(__name__)

UNSUPPORTED_THRESHOLD = 0.05
WEAK_THRESHOLD = 0.5
CONTRADICTION_THRESHOLD = 0.5
MAX_ROUNDS = 4

BAND_UNSUPPORTED = "unsupported"
BAND_WEAK = "weak"
BAND_SUPPORTED = "supported"

_DISTRIBUTION_TOLERANCE = 1e-6


@dataclass(frozen=True)
class CriticThresholds:
    unsupported: float = UNSUPPORTED_THRESHOLD
    weak: float = WEAK_THRESHOLD
    contradiction: float = CONTRADICTION_THRESHOLD
    max_rounds: int = MAX_ROUNDS


def triage(score: float, thresholds: CriticThresholds = CriticThresholds()) -> str:
    """Band a support score: [0, t_u) unsupported, [t_u, t_w) weak, [t_w, 1] supported."""
    if not 0.0 <= score <= 1.0:
        raise BackendContractError(f"support score {score} outside [0, 1]")
    if score < thresholds.unsupported:
        return BAND_UNSUPPORTED
    if score < thresholds.weak:
        return BAND_WEAK
    return BAND_SUPPORTED


@dataclass(frozen=True)
class SupportVerdict:
    claim_id: str
    score: float
    band: str

    def to_dict(self) -> dict:
        return {"claim_id": self.claim_id, "score": self.score, "band": self.band}


@dataclass(frozen=True)
class ContradictionCandidate:
    claim_id_a: str
    claim_id_b: str
    p_contradiction: float


@dataclass(frozen=True)
class AdjudicationResult:
    claim_id_a: str
    claim_id_b: str
    inconsistent: bool
    explanation: str
    repair_hint: str = ""  # non-empty iff inconsistent

    def to_dict(self) -> dict:
        return {
            "pair": [self.claim_id_a, self.claim_id_b],
            "inconsistent": self.inconsistent,
            "explanation": self.explanation,
            "repair_hint": self.repair_hint,
        }


@dataclass
class CriticReport:
    round: int
    verdicts: list[SupportVerdict]
    confirmed_contradictions: list[AdjudicationResult]
    dropped_claim_ids: list[str]
    feedback_text: str
    error: str = ""

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "confirmed_contradictions": [c.to_dict() for c in self.confirmed_contradictions],
            "dropped_claim_ids": list(self.dropped_claim_ids),
            "feedback_text": self.feedback_text,
            "error": self.error,
        }


def _validate_distribution(probs: Sequence[float]) -> None:
    if len(probs) != 3 or any(p < 0.0 or p > 1.0 for p in probs) or abs(sum(probs) - 1.0) > _DISTRIBUTION_TOLERANCE:
        raise BackendContractError(f"NLI probabilities {tuple(probs)} are not a 3-way distribution")


def screen_contradictions(
    claims: Sequence[AtomicClaim],
    nli,
    threshold: float = CONTRADICTION_THRESHOLD,
) -> list[ContradictionCandidate]:
    """Evaluate all n(n-1)/2 unordered claim pairs; retain p_contradiction > threshold.

    Direction is symmetrized by taking the max contradiction probability over
    the two orderings, preserving the screen's high-recall purpose.
    """
    candidates: list[ContradictionCandidate] = []
    for i in range(len(claims)):
        for j in range(i + 1, len(claims)):
            a, b = claims[i], claims[j]
            probs_ab = nli.nli_probs(a.text, b.text)
            _validate_distribution(probs_ab)
            probs_ba = nli.nli_probs(b.text, a.text)
            _validate_distribution(probs_ba)
            p = max(probs_ab[2], probs_ba[2])
            if p > threshold:
                id_a, id_b = sorted((a.claim_id, b.claim_id))
                candidates.append(ContradictionCandidate(id_a, id_b, p))
    return candidates


def _adjudication_prompt(claim_a: AtomicClaim, claim_b: AtomicClaim, p_contradiction: float) -> str:
    return "\n".join(
        [
            f"# {promptdoc.SECTION_TASK}",
            "Two extracted claims may contradict each other. Decide whether they are",
            "genuinely inconsistent. Answer on a single line, exactly one of:",
            "INCONSISTENT: <explanation> HINT: <repair hint>",
            "CONSISTENT: <explanation>",
            "",
            "# Pair",
            f"p_contradiction: {p_contradiction:.2f}",
            f"A ({claim_a.claim_id}): {claim_a.text}",
            f"B ({claim_b.claim_id}): {claim_b.text}",
        ]
    )


def adjudicate(
    claim_a: AtomicClaim,
    claim_b: AtomicClaim,
    p_contradiction: float,
    chat,
    warnings: Optional[list] = None,
) -> AdjudicationResult:
    """Confirm or reject a screened pair; malformed or failed output keeps both claims."""
    id_a, id_b = sorted((claim_a.claim_id, claim_b.claim_id))
    try:
        raw = chat.chat_complete(_adjudication_prompt(claim_a, claim_b, p_contradiction), "adjudicate")
    except Exception as exc:
        msg = f"adjudicator failed on pair ({id_a}, {id_b}): {exc}"
        logger.warning(msg)
        if warnings is not None:
            warnings.append(msg)
        return AdjudicationResult(id_a, id_b, False, f"adjudicator unavailable: {exc}")

    text = raw.strip()
    upper = text.upper()
    if upper.startswith("INCONSISTENT"):
        body = text.split(":", 1)[1].strip() if ":" in text else ""
        if "HINT:" in body:
            explanation, hint = body.split("HINT:", 1)
            explanation, hint = explanation.strip(), hint.strip()
            if hint:
                return AdjudicationResult(id_a, id_b, True, explanation, hint)
        msg = f"adjudicator output missing repair hint for pair ({id_a}, {id_b}); keeping both claims"
        logger.warning(msg)
        if warnings is not None:
            warnings.append(msg)
        return AdjudicationResult(id_a, id_b, False, body or text)
    if upper.startswith("CONSISTENT"):
        explanation = text.split(":", 1)[1].strip() if ":" in text else ""
        return AdjudicationResult(id_a, id_b, False, explanation)

    msg = f"adjudicator output unparseable for pair ({id_a}, {id_b}): {text[:80]!r}"
    logger.warning(msg)
    if warnings is not None:
        warnings.append(msg)
    return AdjudicationResult(id_a, id_b, False, text[:200])


def build_feedback(
    dropped: Sequence[AtomicClaim],
    weak: Sequence[AtomicClaim],
    confirmed: Sequence[AdjudicationResult],
    rejected: Sequence[RejectedLine] = (),
) -> str:
    lines: list[str] = []
    for claim in dropped:
        lines.append(promptdoc.render_dropped_line(claim.claim_id, claim.line()))
    for claim in weak:
        lines.append(promptdoc.render_weak_line(claim.claim_id, claim.line()))
    for adj in confirmed:
        lines.append(promptdoc.render_contradiction_line(adj.claim_id_a, adj.claim_id_b, adj.repair_hint))
    for rej in rejected:
        lines.append(promptdoc.render_rejected_line(rej.reason, rej.line))
    return "\n".join(lines)


def claim_set_key(claims: Sequence[AtomicClaim]) -> frozenset:
    return frozenset(canonical_key(c.text, c.start_s, c.end_s, c.modality) for c in claims)


# Re-extraction callback: (feedback_text, surviving claims) -> (new claims, rejected lines)
Reextractor = Callable[[str, list[AtomicClaim]], tuple[list[AtomicClaim], list[RejectedLine]]]


def refine_loop(
    initial_claims: Sequence[AtomicClaim],
    *,
    scorer: Callable[[AtomicClaim], float],
    nli,
    adjudicator_chat,
    reextract: Optional[Reextractor] = None,
    thresholds: CriticThresholds = CriticThresholds(),
    initial_rejected: Sequence[RejectedLine] = (),
    warnings: Optional[list] = None,
    report_sink: Optional[Callable[[CriticReport], None]] = None,
) -> tuple[list[AtomicClaim], list[CriticReport]]:
    """Run the refinement loop for one (query, video) claim set.

    Returns the final claims (all carrying their last support score, none
    below the unsupported threshold) and the per-round reports. ``reextract``
    may be None when no repair path exists, in which case the loop behaves as
    a single score-and-drop pass with screening.
    """
    current = list(initial_claims)
    pending_rejected = list(initial_rejected)
    reports: list[CriticReport] = []

    for round_no in range(1, thresholds.max_rounds + 1):
        verdicts = []
        survivors: list[AtomicClaim] = []
        dropped: list[AtomicClaim] = []
        weak: list[AtomicClaim] = []
        for claim in current:
            score = scorer(claim)
            band = triage(score, thresholds)
            claim.support_score = score
            verdicts.append(SupportVerdict(claim.claim_id, score, band))
            if band == BAND_UNSUPPORTED:
                dropped.append(claim)
            else:
                survivors.append(claim)
                if band == BAND_WEAK:
                    weak.append(claim)

        candidates = screen_contradictions(survivors, nli, thresholds.contradiction)
        by_id = {c.claim_id: c for c in survivors}
        confirmed: list[AdjudicationResult] = []
        for cand in candidates:
            result = adjudicate(
                by_id[cand.claim_id_a], by_id[cand.claim_id_b], cand.p_contradiction, adjudicator_chat, warnings
            )
            if result.inconsistent:
                confirmed.append(result)

        feedback = build_feedback(dropped, weak, confirmed, pending_rejected)
        report = CriticReport(
            round=round_no,
            verdicts=verdicts,
            confirmed_contradictions=confirmed,
            dropped_claim_ids=[c.claim_id for c in dropped],
            feedback_text=feedback,
        )
        reports.append(report)

        needs_repair = bool(weak or confirmed)
        if not needs_repair or round_no == thresholds.max_rounds or reextract is None:
            if report_sink:
                report_sink(report)
            return survivors, reports

        try:
            new_claims, new_rejected = reextract(feedback, survivors)
        except Exception as exc:
            report.error = f"re-extraction failed: {exc}"
            msg = f"re-extraction failed in round {round_no}; returning last completed round's claims: {exc}"
            logger.warning(msg)
            if warnings is not None:
                warnings.append(msg)
            if report_sink:
                report_sink(report)
            return survivors, reports

        if report_sink:
            report_sink(report)
        pending_rejected = list(new_rejected)
        if claim_set_key(new_claims) == claim_set_key(current):
            return survivors, reports
        current = list(new_claims)

    return survivors, reports  # pragma: no cover - loop always returns inside
