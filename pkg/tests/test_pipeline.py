import json
from pathlib import Path

import pytest

from craft.config import load_config
from craft.errors import PrerequisiteError
from craft.extraction import AtomicClaim
from craft.ingest import VideoChunk
from craft.pipeline import Pipeline, assign_to_chunks, build_evidence
from craft.transcripts import Transcript

from conftest import FIXTURES_DIR, make_claim

GOLDEN_SUBMISSION = FIXTURES_DIR / "golden" / "submission.jsonl"
GOLDEN_COUNTS = json.loads((FIXTURES_DIR / "golden" / "backend_calls.json").read_text(encoding="utf-8"))


def _pipeline(cache: Path) -> Pipeline:
    config = load_config(FIXTURES_DIR / "config.yaml", {"cache_dir": str(cache)})
    return Pipeline(config)


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    cache = tmp_path_factory.mktemp("cache")
    pipeline = _pipeline(cache)
    manifest = pipeline.run_all()
    return pipeline, manifest


def test_golden_submission_byte_identical(finished_run):
    pipeline, _ = finished_run
    assert pipeline.output_path.read_bytes() == GOLDEN_SUBMISSION.read_bytes()


def test_golden_backend_call_counts(finished_run):
    _, manifest = finished_run
    assert manifest.backend_calls == GOLDEN_COUNTS["backend_calls"]


def test_golden_stage_counts(finished_run):
    _, manifest = finished_run
    observed = {name: {"inputs": s.inputs, "outputs": s.outputs} for name, s in manifest.stages.items()}
    assert observed == GOLDEN_COUNTS["stages"]


def test_manifest_written_with_digest(finished_run):
    pipeline, manifest = finished_run
    on_disk = json.loads((pipeline.cache_root / "run_manifest.json").read_text(encoding="utf-8"))
    assert on_disk["config_digest"] == pipeline.config.digest()
    assert on_disk["backend_calls"] == manifest.backend_calls


def test_rerun_makes_zero_backend_calls(finished_run):
    pipeline, _ = finished_run
    rerun = _pipeline(pipeline.cache_root)
    manifest = rerun.run_all()
    assert sum(manifest.backend_calls.values()) == 0
    assert rerun.output_path.read_bytes() == GOLDEN_SUBMISSION.read_bytes()


def test_two_fresh_runs_are_byte_identical(tmp_path):
    # Not just the submission: every cache file is byte-identical across
    # fresh runs, even in different cache directories (paths are stored
    # relative to the cache root). The manifest is excluded as it carries
    # wall-clock timings.
    a = _pipeline(tmp_path / "a")
    a.run_all()
    b = _pipeline(tmp_path / "b")
    b.run_all()

    def tree(pipeline):
        root = pipeline.cache_root
        return {
            str(f.relative_to(root)): f.read_bytes()
            for f in sorted(root.rglob("*"))
            if f.is_file() and f.name != "run_manifest.json"
        }

    assert tree(a) == tree(b)


def test_critic_reports_persisted(finished_run):
    pipeline, _ = finished_run
    rounds = sorted((pipeline.cache_root / "critic" / "q1" / "v_flood").glob("round*.json"))
    assert [p.name for p in rounds] == ["round1.json", "round2.json"]
    round1 = json.loads(rounds[0].read_text(encoding="utf-8"))
    assert round1["confirmed_contradictions"], "the bridge open/closed pair must be confirmed"
    assert round1["dropped_claim_ids"], "the ungrounded visual claim must be dropped"


def test_degenerate_video_contributes_no_claims(finished_run):
    pipeline, _ = finished_run
    refined = json.loads((pipeline.cache_root / "claims" / "q1" / "v_noise_my" / "refined.json").read_text())
    assert refined["claims"] == []


def test_contradicted_claim_absent_from_submission(finished_run):
    pipeline, _ = finished_run
    text = pipeline.output_path.read_text(encoding="utf-8")
    assert "stayed open" in text
    assert "was closed" not in text


def test_chunk_level_citations_remapped_to_parents(finished_run):
    pipeline, _ = finished_run
    refined = json.loads((pipeline.cache_root / "claims" / "q1" / "v_flood" / "refined.json").read_text())
    assert any(c["source_video_id"] == "v_flood#001" for c in refined["claims"])
    for line in pipeline.output_path.read_text(encoding="utf-8").splitlines():
        for statement in json.loads(line)["report"]:
            for citation in statement["citations"]:
                assert "#" not in citation


def test_consolidate_without_claim_caches_is_prerequisite_error(tmp_path):
    pipeline = _pipeline(tmp_path / "fresh")
    with pytest.raises(PrerequisiteError):
        pipeline.run_stage("consolidate")


def test_dks_without_ingest_is_prerequisite_error(tmp_path):
    pipeline = _pipeline(tmp_path / "fresh")
    with pytest.raises(PrerequisiteError):
        pipeline.run_stage("dks")


def test_extract_without_transcripts_is_prerequisite_error(tmp_path):
    pipeline = _pipeline(tmp_path / "fresh")
    pipeline.run_stage("ingest")
    with pytest.raises(PrerequisiteError, match="transcribe"):
        pipeline.run_stage("extract")


def test_extract_works_without_dks_clips(tmp_path):
    # Keyframe selection is optional and non-blocking: extraction falls back
    # to raw chunks when no clip exists.
    pipeline = _pipeline(tmp_path / "nodks")
    pipeline.run_stage("ingest")
    pipeline.run_stage("transcribe")
    stats = pipeline.run_stage("extract")
    assert stats.outputs == 5
    refined = json.loads((pipeline.cache_root / "claims" / "q1" / "v_flood" / "refined.json").read_text())
    assert refined["claims"]


def test_evaluate_produces_metrics(finished_run):
    pipeline, _ = finished_run
    evaluation = pipeline.evaluate(FIXTURES_DIR / "references.jsonl")
    assert (pipeline.cache_root / "metrics.json").exists()
    assert (pipeline.cache_root / "metrics.txt").exists()
    assert evaluation.corpus.ref_r == pytest.approx((2 / 3 + 1.0) / 2)
    assert 0.0 < evaluation.corpus.avg <= 1.0


def test_parallel_run_matches_serial_output(tmp_path):
    config = load_config(
        FIXTURES_DIR / "config.yaml",
        {"cache_dir": str(tmp_path / "par"), "runtime.max_workers": 4},
    )
    pipeline = Pipeline(config)
    pipeline.run_all()
    assert pipeline.output_path.read_bytes() == GOLDEN_SUBMISSION.read_bytes()


# --- helpers used by the extract stage ---------------------------------------------


def test_assign_to_chunks_homes_claims_by_span_start():
    chunks = [VideoChunk("v#000", "v", 0.0, 120.0), VideoChunk("v#001", "v", 120.0, 150.0)]
    claims = [make_claim("Early fact stands.", video_id="v", start_s=5.0, end_s=9.0),
              make_claim("Late fact stands.", video_id="v", start_s=125.0, end_s=131.0)]
    homed = assign_to_chunks(claims, chunks)
    assert [c.source_video_id for c in homed] == ["v#000", "v#001"]


def test_assign_to_chunks_clamps_cross_boundary_span():
    chunks = [VideoChunk("v#000", "v", 0.0, 120.0), VideoChunk("v#001", "v", 120.0, 150.0)]
    claims = [make_claim("Boundary fact stands.", video_id="v", start_s=115.0, end_s=130.0)]
    warnings = []
    homed = assign_to_chunks(claims, chunks, warnings)
    assert homed[0].source_video_id == "v#000"
    assert homed[0].end_s == 120.0
    assert warnings


def test_build_evidence_window_overlapping_segments():
    transcript = Transcript(
        video_id="v",
        language="zh",
        segments=[(0.0, 5.0, "第一段"), (5.0, 12.0, "第二段"), (12.0, 20.0, "第三段")],
        backend_used="primary",
        english_text="first part. second part. third part.",
    )
    claim = make_claim("second part happened.", video_id="v#000", start_s=6.0, end_s=9.0)
    evidence = build_evidence(transcript, claim)
    assert "第二段" in evidence.transcript_window
    assert "第一段" not in evidence.transcript_window
    assert "second part" in evidence.transcript_window  # translation appended for non-English


def test_build_evidence_empty_for_degenerate():
    transcript = Transcript(
        video_id="v", language="en", segments=[(0.0, 60.0, "stop " * 25)], backend_used="primary"
    )
    from craft.transcripts import is_degenerate

    transcript.degeneracy = is_degenerate(transcript.full_text)
    claim = make_claim("anything goes here.", video_id="v#000", start_s=0.0, end_s=5.0)
    assert build_evidence(transcript, claim).transcript_window == ""


def test_refined_claims_roundtrip_through_dict():
    claim = make_claim("Fact stands.", support_score=0.8)
    assert AtomicClaim.from_dict(claim.to_dict()) == claim
