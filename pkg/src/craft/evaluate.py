"""Claim-level evaluation: reference and citation precision/recall, ROUGE-L.

This is a development-loop proxy for subclaim-level attribution scoring, not
a reimplementation of any official leaderboard evaluator. Support judgments
go through a pluggable judge (exact-match for tests, model-backed for real
runs); the arithmetic below is fixed:

* Ref-P: fraction of predicted subclaims supported by the reference.
* Ref-R: fraction of reference subclaims covered by the prediction.
* Cite-P: fraction of predicted subclaims citing at least one video judged
  to support them.
* Cite-R: fraction of covered reference subclaims whose covering prediction
  cites at least one gold supporting video.
* F1 is the harmonic mean, computed per query; corpus scores are macro
  averages of per-query values (including F1 — the mean of per-query F1s,
  not the F1 of mean P and R).
* ROUGE-L uses the shared whitespace tokenizer with no stemming.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence

from .errors import EvaluationError
from .transcripts import normalize_tokens, tokenize

logger = logging.getLogger(__name__)


def f1(p: float, r: float) -> float:
    """Harmonic mean; 0 when both inputs are 0."""
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def macro_average(values: Sequence[float]) -> float:
    """Arithmetic mean of the six reported metrics."""
    if not values:
        return 0.0
    return sum(values) / len(values)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length, O(len(a) * len(b)) with rolling rows."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            if x == y:
                curr[j] = prev[j - 1] + 1
            else:
                curr[j] = max(prev[j], curr[j - 1])
        prev = curr
    return prev[-1]


def rouge_l(pred_text: str, ref_text: str, warnings: Optional[list] = None) -> float:
    """LCS-based F-measure (beta = 1) over whitespace tokens, no stemming."""
    ref_tokens = tokenize(ref_text)
    if not ref_tokens:
        msg = "ROUGE-L reference is empty; scoring 0"
        logger.warning(msg)
        if warnings is not None:
            warnings.append(msg)
        return 0.0
    pred_tokens = tokenize(pred_text)
    if not pred_tokens:
        return 0.0
    lcs = lcs_length(pred_tokens, ref_tokens)
    precision = lcs / len(pred_tokens)
    recall = lcs / len(ref_tokens)
    return f1(precision, recall)


class ClaimJudge(Protocol):
    """Pluggable support judge for subclaim evaluation."""

    def decompose(self, text: str) -> list[str]: ...

    def match(self, subclaim: str, candidates: Sequence[str]) -> Optional[int]:
        """Index of a candidate that supports/covers the subclaim, else None."""
        ...


class ExactMatchJudge:
    """Deterministic judge: token-normalized equality; sentence-level decomposition."""

    def decompose(self, text: str) -> list[str]:
        parts: list[str] = []
        current: list[str] = []
        for token in text.split():
            current.append(token)
            if token and token[-1] in ".!?":
                parts.append(" ".join(current))
                current = []
        if current:
            parts.append(" ".join(current))
        return parts

    def match(self, subclaim: str, candidates: Sequence[str]) -> Optional[int]:
        key = " ".join(normalize_tokens(subclaim))
        for i, cand in enumerate(candidates):
            if " ".join(normalize_tokens(cand)) == key:
                return i
        return None


def decompose_subclaims(text: str, judge: ClaimJudge) -> list[str]:
    """Split report text into judgeable subclaims via the judge backend."""
    if not text.strip():
        return []
    try:
        subclaims = judge.decompose(text)
    except Exception as exc:
        raise EvaluationError(f"subclaim decomposition failed: {exc}") from exc
    return [s for s in subclaims if s.strip()]


def reference_pr(pred_subclaims: Sequence[str], ref_subclaims: Sequence[str], judge: ClaimJudge) -> tuple[float, float]:
    """(Ref-P, Ref-R): support of predictions by references and coverage of references."""
    if pred_subclaims:
        supported = sum(1 for p in pred_subclaims if judge.match(p, ref_subclaims) is not None)
        ref_p = supported / len(pred_subclaims)
    else:
        ref_p = 0.0
    if ref_subclaims:
        covered = sum(1 for r in ref_subclaims if judge.match(r, pred_subclaims) is not None)
        ref_r = covered / len(ref_subclaims)
    else:
        ref_r = 0.0
    return ref_p, ref_r


@dataclass(frozen=True)
class SubclaimJudgment:
    predicted_subclaim: str
    matched_reference_subclaim: Optional[str]
    supported_by_reference: bool
    cited_videos: frozenset[str]
    gold_videos: frozenset[str]


def citation_pr(judgments: Sequence[SubclaimJudgment]) -> tuple[float, float]:
    """(Cite-P, Cite-R) over per-predicted-subclaim judgments."""
    if judgments:
        correct = sum(1 for j in judgments if j.cited_videos & j.gold_videos)
        cite_p = correct / len(judgments)
    else:
        cite_p = 0.0

    covered: dict[str, bool] = {}
    for j in judgments:
        if j.matched_reference_subclaim is None:
            continue
        ok = bool(j.cited_videos & j.gold_videos)
        covered[j.matched_reference_subclaim] = covered.get(j.matched_reference_subclaim, False) or ok
    cite_r = (sum(1 for ok in covered.values() if ok) / len(covered)) if covered else 0.0
    return cite_p, cite_r


@dataclass(frozen=True)
class AttributionScores:
    ref_p: float
    ref_r: float
    ref_f1: float
    cite_p: float
    cite_r: float
    cite_f1: float
    avg: float

    def as_tuple(self) -> tuple[float, ...]:
        return (self.ref_p, self.ref_r, self.ref_f1, self.cite_p, self.cite_r, self.cite_f1)

    def to_dict(self) -> dict:
        return {
            "ref_p": self.ref_p,
            "ref_r": self.ref_r,
            "ref_f1": self.ref_f1,
            "cite_p": self.cite_p,
            "cite_r": self.cite_r,
            "cite_f1": self.cite_f1,
            "avg": self.avg,
        }

    @classmethod
    def from_pr(cls, ref_p: float, ref_r: float, cite_p: float, cite_r: float) -> "AttributionScores":
        ref_f1 = f1(ref_p, ref_r)
        cite_f1 = f1(cite_p, cite_r)
        return cls(ref_p, ref_r, ref_f1, cite_p, cite_r, cite_f1, macro_average((ref_p, ref_r, ref_f1, cite_p, cite_r, cite_f1)))


@dataclass
class GoldReference:
    query_id: str
    reference_text: str
    subclaims: list[tuple[str, frozenset[str]]]  # (subclaim text, supporting video IDs)

    @property
    def gold_videos(self) -> frozenset[str]:
        out: set[str] = set()
        for _, videos in self.subclaims:
            out |= videos
        return frozenset(out)


def load_references(path: Path) -> list[GoldReference]:
    refs = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            refs.append(
                GoldReference(
                    query_id=row["query_id"],
                    reference_text=row.get("reference_text", ""),
                    subclaims=[(sc["text"], frozenset(sc.get("videos", []))) for sc in row.get("subclaims", [])],
                )
            )
    return refs


def evaluate_query(
    statements: Sequence[tuple[str, Sequence[str]]],
    reference: GoldReference,
    judge: ClaimJudge,
) -> AttributionScores:
    """Score one query's (statement text, citations) pairs against its reference."""
    preds: list[tuple[str, frozenset[str]]] = []
    for text, citations in statements:
        for subclaim in decompose_subclaims(text, judge):
            preds.append((subclaim, frozenset(citations)))

    ref_texts = [text for text, _ in reference.subclaims]
    pred_texts = [text for text, _ in preds]
    ref_p, ref_r = reference_pr(pred_texts, ref_texts, judge)

    judgments: list[SubclaimJudgment] = []
    for subclaim, citations in preds:
        matched = judge.match(subclaim, ref_texts)
        if matched is None:
            judgments.append(SubclaimJudgment(subclaim, None, False, citations, frozenset()))
        else:
            ref_text, gold = reference.subclaims[matched]
            judgments.append(SubclaimJudgment(subclaim, ref_text, True, citations, gold))
    cite_p, cite_r = citation_pr(judgments)
    return AttributionScores.from_pr(ref_p, ref_r, cite_p, cite_r)


@dataclass
class CorpusEvaluation:
    corpus: AttributionScores
    per_query: dict[str, AttributionScores]
    rouge_l: Optional[float]
    skipped_queries: list[str]

    def to_dict(self) -> dict:
        out = {
            "corpus": self.corpus.to_dict(),
            "per_query": {qid: s.to_dict() for qid, s in sorted(self.per_query.items())},
            "skipped_queries": sorted(self.skipped_queries),
        }
        if self.rouge_l is not None:
            out["rouge_l"] = self.rouge_l
        return out


def evaluate_corpus(
    predictions: dict[str, list[tuple[str, Sequence[str]]]],
    references: Sequence[GoldReference],
    judge: ClaimJudge,
) -> CorpusEvaluation:
    """Macro-average per-query scores; queries without gold videos are excluded."""
    per_query: dict[str, AttributionScores] = {}
    skipped: list[str] = []
    rouge_values: list[float] = []
    for ref in references:
        if not ref.gold_videos:
            skipped.append(ref.query_id)
            continue
        statements = predictions.get(ref.query_id, [])
        per_query[ref.query_id] = evaluate_query(statements, ref, judge)
        if ref.reference_text.strip():
            pred_text = " ".join(text for text, _ in statements)
            rouge_values.append(rouge_l(pred_text, ref.reference_text))

    if per_query:
        scores = list(per_query.values())
        corpus = AttributionScores(
            ref_p=macro_average([s.ref_p for s in scores]),
            ref_r=macro_average([s.ref_r for s in scores]),
            ref_f1=macro_average([s.ref_f1 for s in scores]),
            cite_p=macro_average([s.cite_p for s in scores]),
            cite_r=macro_average([s.cite_r for s in scores]),
            cite_f1=macro_average([s.cite_f1 for s in scores]),
            avg=0.0,
        )
        corpus = AttributionScores(
            corpus.ref_p, corpus.ref_r, corpus.ref_f1, corpus.cite_p, corpus.cite_r, corpus.cite_f1,
            macro_average(corpus.as_tuple()),
        )
    else:
        corpus = AttributionScores(0, 0, 0, 0, 0, 0, 0)
    rouge = macro_average(rouge_values) if rouge_values else None
    return CorpusEvaluation(corpus=corpus, per_query=per_query, rouge_l=rouge, skipped_queries=skipped)


_METRIC_COLUMNS = ("ref_p", "ref_r", "ref_f1", "cite_p", "cite_r", "cite_f1", "avg")


def format_table(evaluation: CorpusEvaluation) -> str:
    """Aligned-columns text table: one row per query plus the corpus row."""
    name_width = max([len("query")] + [len(q) for q in evaluation.per_query] + [len("corpus")])
    header = "query".ljust(name_width) + "".join(col.rjust(9) for col in _METRIC_COLUMNS)
    lines = [header]

    def row(name: str, scores: AttributionScores) -> str:
        values = scores.to_dict()
        return name.ljust(name_width) + "".join(f"{values[col]:9.3f}" for col in _METRIC_COLUMNS)

    for query_id in sorted(evaluation.per_query):
        lines.append(row(query_id, evaluation.per_query[query_id]))
    lines.append(row("corpus", evaluation.corpus))
    if evaluation.rouge_l is not None:
        lines.append(f"rouge_l {evaluation.rouge_l:.4f}")
    if evaluation.skipped_queries:
        lines.append("excluded (no gold videos): " + ", ".join(sorted(evaluation.skipped_queries)))
    return "\n".join(lines)
