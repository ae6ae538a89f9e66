"""Stage orchestration: ingest -> transcribe -> dks -> extract -> consolidate.

Each stage is cache-driven and idempotent: work units whose outputs already
exist are skipped, so reruns make zero backend calls for cached stages and
the run manifest's per-role call counts double as a cache-regression signal.
Stage boundaries are barriers; within a stage, independent (query, video)
work runs under a bounded worker pool.

All cache files live under one root:

    chunks/<video_id>.json      chunk list per video
    chunk_map.json              chunk -> parent mapping
    frames/<chunk_id>.jsonl     frame-candidate manifests (paths relative to root)
    frames_px/<chunk_id>/       materialized frame files
    transcripts/<video_id>.json
    personas/<query_id>.json
    dks/<query_id>/<video_id>.json
    claims/<query_id>/<video_id>/round<r>.txt and refined.json
    critic/<query_id>/<video_id>/round<r>.json
    consolidate/<query_id>.json
    run_manifest.json
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import consolidate as consolidate_mod
from . import critic as critic_mod
from . import dks as dks_mod
from . import evaluate as evaluate_mod
from . import extraction, ingest, transcripts
from .backends import BackendSet, EvidenceRef, build_mock_backends, build_remote_backends
from .config import PipelineConfig
from .errors import InvalidInputError, PrerequisiteError
from .extraction import AtomicClaim, PersonaQuery

logger = logging.getLogger(__name__)

STAGE_ORDER = ("ingest", "transcribe", "dks", "extract", "consolidate")


@dataclass
class StageStats:
    duration_s: float = 0.0
    inputs: int = 0
    outputs: int = 0

    def to_dict(self) -> dict:
        return {"duration_s": self.duration_s, "inputs": self.inputs, "outputs": self.outputs}


@dataclass
class RunManifest:
    config_digest: str
    stages: dict[str, StageStats] = field(default_factory=dict)
    backend_calls: dict[str, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config_digest": self.config_digest,
            "stages": {name: stats.to_dict() for name, stats in self.stages.items()},
            "backend_calls": dict(sorted(self.backend_calls.items())),
            "warnings": list(self.warnings),
        }

    def write(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(self.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8")
        tmp.replace(path)


class ChunkStore:
    """Chunk lists and the chunk->parent map under the cache root."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.dir = self.root / "chunks"
        self.map_path = self.root / "chunk_map.json"

    def path_for(self, video_id: str) -> Path:
        return self.dir / f"{video_id}.json"

    def get(self, video_id: str) -> Optional[list[ingest.VideoChunk]]:
        path = self.path_for(video_id)
        if not path.exists():
            return None
        rows = json.loads(path.read_text(encoding="utf-8"))
        return [ingest.VideoChunk.from_dict(r) for r in rows]

    def put(self, video_id: str, chunks: Sequence[ingest.VideoChunk]) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        tmp = self.path_for(video_id).with_suffix(".json.tmp")
        tmp.write_text(json.dumps([c.to_dict() for c in chunks], ensure_ascii=False, indent=2), encoding="utf-8")
        tmp.replace(self.path_for(video_id))

    def load_map(self) -> ingest.ChunkMap:
        if not self.map_path.exists():
            raise PrerequisiteError("chunk map missing; run the ingest stage first")
        return ingest.ChunkMap.from_dict(json.loads(self.map_path.read_text(encoding="utf-8")))

    def save_map(self, chunk_map: ingest.ChunkMap) -> None:
        self.map_path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.map_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(chunk_map.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8")
        tmp.replace(self.map_path)


def build_backends(config: PipelineConfig) -> BackendSet:
    if config.backend_mode == "remote":
        return build_remote_backends(config.backends, max_concurrency=config.runtime.backend_max_concurrency)
    return build_mock_backends(config.backends)


def _map_bounded(fn: Callable, items: Sequence, max_workers: int) -> list:
    """Apply fn to items under a bounded pool, preserving input order."""
    if max_workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))


def assign_to_chunks(
    claims: Sequence[AtomicClaim],
    chunks: Sequence[ingest.VideoChunk],
    warnings: Optional[list] = None,
) -> list[AtomicClaim]:
    """Re-home each claim on the chunk containing its span start.

    Claims become chunk-level citations; a span leaking past its chunk's end
    is clamped with a warning so the cited window stays inside one chunk.
    Claim IDs are recomputed from the final (text, span, modality) identity.
    """
    out: list[AtomicClaim] = []
    occurrences: dict[str, int] = {}
    for claim in claims:
        home = None
        for chunk in chunks:
            if chunk.start_s <= claim.start_s < chunk.end_s:
                home = chunk
                break
        if home is None:
            raise InvalidInputError(
                f"claim {claim.claim_id} span start {claim.start_s} lies outside every chunk of {claim.source_video_id}"
            )
        end_s = claim.end_s
        if end_s > home.end_s:
            msg = (
                f"claim span [{claim.start_s}, {claim.end_s}) crosses the end of chunk {home.chunk_id}; "
                f"clamped to {home.end_s}"
            )
            logger.warning(msg)
            if warnings is not None:
                warnings.append(msg)
            end_s = home.end_s
        key = extraction.canonical_key(claim.text, claim.start_s, end_s, claim.modality)
        occ = occurrences.get(key, 0)
        occurrences[key] = occ + 1
        out.append(
            AtomicClaim(
                claim_id=extraction.claim_id_for(key, occ),
                query_id=claim.query_id,
                source_video_id=home.chunk_id,
                start_s=claim.start_s,
                end_s=end_s,
                modality=claim.modality,
                text=claim.text,
                support_score=claim.support_score,
            )
        )
    return out


def build_evidence(transcript: Optional[transcripts.Transcript], claim: AtomicClaim) -> EvidenceRef:
    """Transcript window overlapping the claim span, plus the English translation."""
    window = ""
    if transcript is not None and not transcript.is_degenerate:
        overlapping = [text for start, end, text in transcript.segments if start < claim.end_s and end > claim.start_s]
        window = " ".join(overlapping)
        if transcript.english_text and transcript.language != "en":
            window = (window + " " + transcript.english_text).strip()
    return EvidenceRef(claim.source_video_id, claim.start_s, claim.end_s, window)


class Pipeline:
    """Owns the cache layout and runs stages against one backend set."""

    def __init__(self, config: PipelineConfig, backends: Optional[BackendSet] = None):
        config.validate()
        self.config = config
        self.backends = backends if backends is not None else build_backends(config)
        self.cache_root = Path(config.cache_dir)
        self.cache_root.mkdir(parents=True, exist_ok=True)
        self.chunk_store = ChunkStore(self.cache_root)
        self.transcript_store = transcripts.TranscriptStore(self.cache_root)
        self.clip_store = dks_mod.ClipStore(self.cache_root)
        self.warnings: list[str] = []
        self._corpus: Optional[list[ingest.VideoMeta]] = None
        self._queries: Optional[list[PersonaQuery]] = None

    # ------------------------------------------------------------------ utils

    def corpus(self) -> list[ingest.VideoMeta]:
        if self._corpus is None:
            if not self.config.corpus:
                raise InvalidInputError("config.corpus is not set")
            self._corpus = ingest.load_corpus_manifest(Path(self.config.corpus))
        return self._corpus

    def queries(self) -> list[PersonaQuery]:
        if self._queries is None:
            if not self.config.queries:
                raise InvalidInputError("config.queries is not set")
            self._queries = extraction.load_queries(Path(self.config.queries))
            corpus_ids = {m.video_id for m in self.corpus()}
            for pq in self._queries:
                missing = [v for v in pq.video_ids if v not in corpus_ids]
                if missing:
                    raise InvalidInputError(f"query {pq.query_id} references unknown videos: {missing}")
        return self._queries

    def _frames_manifest_path(self, chunk_id: str) -> Path:
        return self.cache_root / "frames" / f"{chunk_id}.jsonl"

    def _claims_dir(self, query_id: str, video_id: str) -> Path:
        return self.cache_root / "claims" / query_id / video_id

    def _critic_dir(self, query_id: str, video_id: str) -> Path:
        return self.cache_root / "critic" / query_id / video_id

    def _consolidate_path(self, query_id: str) -> Path:
        return self.cache_root / "consolidate" / f"{query_id}.json"

    @property
    def output_path(self) -> Path:
        return Path(self.config.output) if self.config.output else self.cache_root / "submission.jsonl"

    # ----------------------------------------------------------------- stages

    def stage_ingest(self) -> StageStats:
        stats = StageStats(inputs=len(self.corpus()))
        started = time.perf_counter()
        chunk_map = ingest.ChunkMap()
        if self.chunk_store.map_path.exists():
            chunk_map = self.chunk_store.load_map()

        for meta in self.corpus():
            chunks = self.chunk_store.get(meta.video_id)
            if chunks is None:
                chunks = ingest.chunk_video(meta, self.config.ingest.max_chunk_s)
                self.chunk_store.put(meta.video_id, chunks)
            chunk_map.add_chunks(chunks)
            for chunk in chunks:
                manifest_path = self._frames_manifest_path(chunk.chunk_id)
                if manifest_path.exists():
                    continue
                if not self.config.ingest.frame_cmd:
                    raise InvalidInputError("ingest.frame_cmd is not configured")
                outdir = self.cache_root / "frames_px" / chunk.chunk_id
                records = ingest.extract_frame_manifest(
                    chunk,
                    self.config.dks.fps,
                    media_path=meta.media_path,
                    frame_cmd=self.config.ingest.frame_cmd,
                    outdir=outdir,
                )
                relative = [
                    ingest.FrameRecord(r.frame_index, r.timestamp_s, str(Path(r.frame_path).relative_to(self.cache_root)))
                    for r in records
                ]
                ingest.write_frame_manifest(relative, manifest_path)
                stats.outputs += 1
        self.chunk_store.save_map(chunk_map)
        stats.duration_s = time.perf_counter() - started
        return stats

    def stage_transcribe(self) -> StageStats:
        stats = StageStats(inputs=len(self.corpus()))
        started = time.perf_counter()

        def work(meta: ingest.VideoMeta) -> None:
            transcript = transcripts.transcribe(
                meta,
                self.backends.asr_primary,
                self.backends.asr_fallback,
                self.transcript_store,
                degeneracy_kwargs=self.config.transcripts.as_kwargs(),
            )
            transcripts.translate_if_needed(transcript, self.backends.translator, self.transcript_store, self.warnings)

        _map_bounded(work, self.corpus(), self.config.runtime.max_workers)
        stats.outputs = len(self.corpus())
        stats.duration_s = time.perf_counter() - started
        return stats

    def _candidate_frames(self, video_id: str) -> list[ingest.FrameRecord]:
        chunks = self.chunk_store.get(video_id)
        if chunks is None:
            raise PrerequisiteError(f"no chunks cached for video {video_id}; run the ingest stage first")
        records: list[ingest.FrameRecord] = []
        for chunk in chunks:
            manifest_path = self._frames_manifest_path(chunk.chunk_id)
            if not manifest_path.exists():
                raise PrerequisiteError(f"no frame manifest for chunk {chunk.chunk_id}; run the ingest stage first")
            records.extend(ingest.read_frame_manifest(manifest_path))
        return [ingest.FrameRecord(i, r.timestamp_s, r.frame_path) for i, r in enumerate(records)]

    def stage_dks(self) -> StageStats:
        pairs = [(pq, video_id) for pq in self.queries() for video_id in pq.video_ids]
        stats = StageStats(inputs=len(pairs))
        started = time.perf_counter()

        def work(pair: tuple[PersonaQuery, str]) -> int:
            pq, video_id = pair
            if self.clip_store.get(pq.query_id, video_id) is not None:
                return 0
            candidates = self._candidate_frames(video_id)
            if not candidates:
                self.warnings.append(f"no candidate frames for video {video_id}; skipping keyframe selection")
                return 0
            scores = dks_mod.score_frames(candidates, pq.query_text, self.backends.embedding)
            clip = dks_mod.select_keyframes(scores, self.config.dks.budget, query_id=pq.query_id, video_id=video_id)
            self.clip_store.put(clip)
            return 1

        results = _map_bounded(work, pairs, self.config.runtime.max_workers)
        stats.outputs = sum(results)
        stats.duration_s = time.perf_counter() - started
        return stats

    # -- extract stage ------------------------------------------------------

    def _ensure_persona(self, pq: PersonaQuery) -> PersonaQuery:
        if pq.has_persona:
            return pq
        persona_path = self.cache_root / "personas" / f"{pq.query_id}.json"
        if persona_path.exists():
            data = json.loads(persona_path.read_text(encoding="utf-8"))
        else:
            title, background = extraction.synthesize_persona(pq.query_text, None, self.backends.chat)
            data = {"title": title, "background": background}
            persona_path.parent.mkdir(parents=True, exist_ok=True)
            persona_path.write_text(json.dumps(data, ensure_ascii=False, indent=2), encoding="utf-8")
        return PersonaQuery(
            query_id=pq.query_id,
            query_text=pq.query_text,
            video_ids=pq.video_ids,
            persona_title=data["title"],
            persona_background=data["background"],
        )

    def _check_transcripts_present(self) -> None:
        missing = [m.video_id for m in self.corpus() if not self.transcript_store.path_for(m.video_id).exists()]
        if missing:
            raise PrerequisiteError(f"transcripts missing for {missing}; run the transcribe stage first")

    def _refine_one(self, pq: PersonaQuery, meta: ingest.VideoMeta) -> int:
        refined_path = self._claims_dir(pq.query_id, meta.video_id) / "refined.json"
        if refined_path.exists():
            return 0
        chunks = self.chunk_store.get(meta.video_id)
        if chunks is None:
            raise PrerequisiteError(f"no chunks cached for video {meta.video_id}; run the ingest stage first")
        transcript = self.transcript_store.get(meta.video_id)
        visual = dks_mod.resolve_visual_input(pq.query_id, meta.video_id, self.clip_store, self.chunk_store)

        claims_dir = self._claims_dir(pq.query_id, meta.video_id)
        claims_dir.mkdir(parents=True, exist_ok=True)
        critic_dir = self._critic_dir(pq.query_id, meta.video_id)
        critic_dir.mkdir(parents=True, exist_ok=True)
        round_counter = {"n": 1}

        def run_extraction(feedback: str, previous: Sequence[AtomicClaim]):
            prompt = extraction.build_prompt(
                pq, visual, transcript, feedback_text=feedback, previous_claims=previous
            )
            raw = extraction.extract_claims(prompt, self.backends.chat, query_id=pq.query_id, video_id=meta.video_id)
            (claims_dir / f"round{round_counter['n']}.txt").write_text(raw, encoding="utf-8")
            claims, rejected = extraction.parse_claims(raw, pq.query_id, meta.video_id, max_duration_s=meta.duration_s)
            return assign_to_chunks(claims, chunks, self.warnings), rejected

        def reextract(feedback: str, previous: list[AtomicClaim]):
            round_counter["n"] += 1
            return run_extraction(feedback, previous)

        def report_sink(report: critic_mod.CriticReport) -> None:
            path = critic_dir / f"round{report.round}.json"
            path.write_text(json.dumps(report.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8")

        initial_claims, initial_rejected = run_extraction("", ())
        scorer = lambda claim: self.backends.entailment.entailment_score(claim.text, build_evidence(transcript, claim))
        final_claims, _reports = critic_mod.refine_loop(
            initial_claims,
            scorer=scorer,
            nli=self.backends.nli,
            adjudicator_chat=self.backends.chat,
            reextract=reextract,
            thresholds=self.config.critic,
            initial_rejected=initial_rejected,
            warnings=self.warnings,
            report_sink=report_sink,
        )
        payload = {
            "query_id": pq.query_id,
            "video_id": meta.video_id,
            "claims": [c.to_dict() for c in final_claims],
        }
        tmp = refined_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(payload, ensure_ascii=False, indent=2), encoding="utf-8")
        tmp.replace(refined_path)
        return 1

    def stage_extract(self) -> StageStats:
        self.chunk_store.load_map()  # prerequisite: ingest ran
        self._check_transcripts_present()
        by_id = {m.video_id: m for m in self.corpus()}
        resolved = [self._ensure_persona(pq) for pq in self.queries()]
        pairs = [(pq, by_id[video_id]) for pq in resolved for video_id in pq.video_ids]
        stats = StageStats(inputs=len(pairs))
        started = time.perf_counter()
        results = _map_bounded(lambda pair: self._refine_one(*pair), pairs, self.config.runtime.max_workers)
        stats.outputs = sum(results)
        stats.duration_s = time.perf_counter() - started
        return stats

    # -- consolidate stage ---------------------------------------------------

    def _load_refined(self, query_id: str, video_id: str) -> list[AtomicClaim]:
        path = self._claims_dir(query_id, video_id) / "refined.json"
        if not path.exists():
            raise PrerequisiteError(
                f"refined claims missing for query {query_id} video {video_id}; run the extract stage first"
            )
        payload = json.loads(path.read_text(encoding="utf-8"))
        return [AtomicClaim.from_dict(d) for d in payload["claims"]]

    def _consolidate_one(self, pq: PersonaQuery, chunk_map: ingest.ChunkMap) -> int:
        out_path = self._consolidate_path(pq.query_id)
        if out_path.exists():
            return 0
        per_video = {video_id: self._load_refined(pq.query_id, video_id) for video_id in pq.video_ids}
        pool = consolidate_mod.pool_evidence(per_video, pq.query_id, pq.video_ids)

        transcripts_by_parent: dict[str, Optional[transcripts.Transcript]] = {}

        def scorer(claim: AtomicClaim) -> float:
            parent = ingest.parent_of(claim.source_video_id, chunk_map)
            if parent not in transcripts_by_parent:
                transcripts_by_parent[parent] = self.transcript_store.get(parent)
            evidence = build_evidence(transcripts_by_parent[parent], claim)
            return self.backends.entailment.entailment_score(claim.text, evidence)

        packet = consolidate_mod.rescore_and_rank(pool, scorer, self.config.consolidate.top_k, self.warnings)
        report = consolidate_mod.generate_report(
            packet,
            self.backends.chat,
            query_text=pq.query_text,
            retry_on_guard=self.config.consolidate.retry_on_guard,
            warnings=self.warnings,
        )
        report = consolidate_mod.merge_citations(report)
        report = consolidate_mod.remap_ids(report, chunk_map)
        payload = {
            "query_id": pq.query_id,
            "packet": [c.to_dict() for c in packet.ranked],
            "report": report.to_dict(),
        }
        out_path.parent.mkdir(parents=True, exist_ok=True)
        tmp = out_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(payload, ensure_ascii=False, indent=2), encoding="utf-8")
        tmp.replace(out_path)
        return 1

    def stage_consolidate(self) -> StageStats:
        chunk_map = self.chunk_store.load_map()
        queries = self.queries()
        stats = StageStats(inputs=len(queries))
        started = time.perf_counter()
        results = _map_bounded(
            lambda pq: self._consolidate_one(pq, chunk_map), queries, self.config.runtime.max_workers
        )
        self._write_submission()
        stats.outputs = sum(results)
        stats.duration_s = time.perf_counter() - started
        return stats

    def _write_submission(self) -> None:
        reports = []
        for pq in self.queries():
            path = self._consolidate_path(pq.query_id)
            payload = json.loads(path.read_text(encoding="utf-8"))
            reports.append(consolidate_mod.Report.from_dict(payload["report"]))
        consolidate_mod.write_jsonl(reports, self.output_path)

    # -- evaluation -----------------------------------------------------------

    def evaluate(self, references_path: Path, submission_path: Optional[Path] = None) -> evaluate_mod.CorpusEvaluation:
        submission = Path(submission_path) if submission_path else self.output_path
        if not submission.exists():
            raise PrerequisiteError(f"submission file {submission} missing; run the consolidate stage first")
        references = evaluate_mod.load_references(Path(references_path))
        predictions: dict[str, list[tuple[str, Sequence[str]]]] = {}
        for report in consolidate_mod.read_jsonl(submission):
            predictions[report.query_id] = [(s.text, sorted(s.citations)) for s in report.statements]
        evaluation = evaluate_mod.evaluate_corpus(predictions, references, evaluate_mod.ExactMatchJudge())
        metrics_path = self.cache_root / "metrics.json"
        metrics_path.write_text(json.dumps(evaluation.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8")
        (self.cache_root / "metrics.txt").write_text(evaluate_mod.format_table(evaluation) + "\n", encoding="utf-8")
        return evaluation

    # -- entry points ----------------------------------------------------------

    def run_stage(self, stage: str) -> StageStats:
        runners = {
            "ingest": self.stage_ingest,
            "transcribe": self.stage_transcribe,
            "dks": self.stage_dks,
            "extract": self.stage_extract,
            "consolidate": self.stage_consolidate,
        }
        if stage not in runners:
            raise InvalidInputError(f"unknown stage {stage!r}; expected one of {sorted(runners)}")
        logger.info("stage=%s starting", stage)
        stats = runners[stage]()
        logger.info("stage=%s done inputs=%d outputs=%d duration=%.3fs", stage, stats.inputs, stats.outputs, stats.duration_s)
        return stats

    def run_all(self) -> RunManifest:
        manifest = RunManifest(config_digest=self.config.digest())
        for stage in STAGE_ORDER:
            manifest.stages[stage] = self.run_stage(stage)
        manifest.backend_calls = self.backends.counter.snapshot()
        manifest.warnings = list(self.warnings)
        manifest.write(self.cache_root / "run_manifest.json")
        return manifest
