from __future__ import annotations

import sys
from pathlib import Path

import pytest
from hypothesis import settings

# One deterministic profile for the whole suite: property tests must not flake.
settings.register_profile("det", derandomize=True, max_examples=200)
settings.load_profile("det")

REPO_ROOT = Path(__file__).resolve().parents[1]
FIXTURES_DIR = REPO_ROOT / "fixtures"
CONTRACT_FIXTURES_DIR = REPO_ROOT / "contract" / "fixtures"

# Frame-extraction command used by tests: writes placeholder frame files.
STUB_FRAME_CMD = (
    f"{sys.executable} -m craft.tools.blank_frames"
    " --input {input} --start {start} --end {end} --fps {fps} --outdir {outdir}"
)


@pytest.fixture
def cache_dir(tmp_path: Path) -> Path:
    root = tmp_path / "cache"
    root.mkdir()
    return root


def make_claim(
    text: str,
    *,
    claim_id: str | None = None,
    query_id: str = "q1",
    video_id: str = "vid#000",
    start_s: float = 0.0,
    end_s: float = 5.0,
    modality: str = "transcript",
    support_score: float | None = None,
):
    from craft.extraction import AtomicClaim, canonical_key, claim_id_for

    if claim_id is None:
        claim_id = claim_id_for(canonical_key(text, start_s, end_s, modality), 0)
    return AtomicClaim(
        claim_id=claim_id,
        query_id=query_id,
        source_video_id=video_id,
        start_s=start_s,
        end_s=end_s,
        modality=modality,
        text=text,
        support_score=support_score,
    )
