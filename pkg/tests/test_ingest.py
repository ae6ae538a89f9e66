import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from craft.errors import IngestError, InvalidInputError
from craft.ingest import (
    ChunkMap,
    VideoChunk,
    VideoMeta,
    chunk_video,
    extract_frame_manifest,
    frame_timestamps,
    load_corpus_manifest,
    parent_of,
    read_frame_manifest,
    write_frame_manifest,
)

from conftest import STUB_FRAME_CMD


def test_chunk_video_300s_gives_three_chunks():
    chunks = chunk_video(VideoMeta("vidA", 300.0))
    assert [(c.start_s, c.end_s) for c in chunks] == [(0.0, 120.0), (120.0, 240.0), (240.0, 300.0)]
    assert [c.chunk_id for c in chunks] == ["vidA#000", "vidA#001", "vidA#002"]


def test_chunk_video_short_video_single_chunk():
    chunks = chunk_video(VideoMeta("v", 90.0))
    assert len(chunks) == 1
    assert (chunks[0].start_s, chunks[0].end_s) == (0.0, 90.0)


def test_chunk_video_exact_multiple_of_max():
    chunks = chunk_video(VideoMeta("v", 240.0))
    assert [(c.start_s, c.end_s) for c in chunks] == [(0.0, 120.0), (120.0, 240.0)]
    assert all(c.duration_s == 120.0 for c in chunks)


@pytest.mark.parametrize("duration", [0.0, -3.0])
def test_chunk_video_rejects_nonpositive_duration(duration):
    with pytest.raises(InvalidInputError):
        chunk_video(VideoMeta("v", duration))


def test_chunk_video_deterministic():
    meta = VideoMeta("v", 457.3)
    first = chunk_video(meta)
    second = chunk_video(meta)
    assert first == second
    assert [c.chunk_id for c in first] == sorted(c.chunk_id for c in first)


def _assert_partition(meta: VideoMeta, chunks: list[VideoChunk], max_chunk_s: float = 120.0):
    assert chunks[0].start_s == 0.0
    assert chunks[-1].end_s == meta.duration_s
    for chunk in chunks:
        assert 0.0 <= chunk.start_s < chunk.end_s
        assert chunk.end_s - chunk.start_s <= max_chunk_s + 1e-9
        assert chunk.parent_video_id == meta.video_id
    for prev, nxt in zip(chunks, chunks[1:]):
        assert prev.end_s == nxt.start_s  # disjoint and covering


def test_partition_property_randomized():
    rng = random.Random(7)
    for i in range(1000):
        duration = rng.uniform(0.5, 1500.0)
        meta = VideoMeta(f"v{i}", duration)
        chunks = chunk_video(meta)
        _assert_partition(meta, chunks)
        chunk_map = ChunkMap()
        chunk_map.add_chunks(chunks)
        for chunk in chunks:
            assert parent_of(chunk.chunk_id, chunk_map) == meta.video_id


@given(duration=st.floats(min_value=0.01, max_value=7200.0, allow_nan=False, allow_infinity=False))
def test_partition_property_hypothesis(duration):
    meta = VideoMeta("v", duration)
    chunks = chunk_video(meta)
    _assert_partition(meta, chunks)


def test_parent_of_direct_lookup():
    chunk_map = ChunkMap({"vidA#002": "vidA"})
    assert parent_of("vidA#002", chunk_map) == "vidA"


def test_parent_of_identity_for_parent_ids():
    chunk_map = ChunkMap({"vidA#000": "vidA"})
    assert parent_of("vidB", chunk_map) == "vidB"


def test_parent_of_unknown_chunk_format_raises():
    chunk_map = ChunkMap({"vidA#000": "vidA"})
    with pytest.raises(KeyError):
        parent_of("vidZ#004", chunk_map)


def test_chunk_map_rejects_conflicting_parent():
    chunk_map = ChunkMap({"vidA#000": "vidA"})
    with pytest.raises(InvalidInputError):
        chunk_map.add_chunks([VideoChunk("vidA#000", "other", 0.0, 10.0)])


# --- frame manifests ---------------------------------------------------------


def test_frame_timestamps_one_fps_120s():
    stamps = frame_timestamps(0.0, 120.0, 1.0)
    assert len(stamps) == 120
    assert stamps[0] == 0.0 and stamps[-1] == 119.0


def test_frame_timestamps_half_fps():
    assert len(frame_timestamps(40.0, 50.0, 0.5)) == 5


def test_frame_timestamps_single_sample():
    stamps = frame_timestamps(240.0, 241.0, 1.0)
    assert stamps == [240.0]


def test_frame_timestamps_rejects_bad_rate():
    with pytest.raises(InvalidInputError):
        frame_timestamps(0.0, 10.0, 0.0)


@pytest.fixture
def media_file(tmp_path):
    path = tmp_path / "clip.mp4"
    path.write_bytes(b"\x00fakevideo")
    return path


def test_extract_frame_manifest_counts_and_order(tmp_path, media_file):
    chunk = VideoChunk("v#000", "v", 120.0, 240.0)
    records = extract_frame_manifest(
        chunk, 1.0, media_path=str(media_file), frame_cmd=STUB_FRAME_CMD, outdir=tmp_path / "out"
    )
    assert len(records) == 120
    stamps = [r.timestamp_s for r in records]
    assert stamps == sorted(stamps) and len(set(stamps)) == len(stamps)
    assert all(120.0 <= t < 240.0 for t in stamps)
    assert (tmp_path / "out" / "frame_000000.jpg").exists()
    assert (tmp_path / "out" / "frame_000119.jpg").exists()


def test_extract_frame_manifest_fractional_rate(tmp_path, media_file):
    chunk = VideoChunk("v#000", "v", 0.0, 10.0)
    records = extract_frame_manifest(
        chunk, 0.5, media_path=str(media_file), frame_cmd=STUB_FRAME_CMD, outdir=tmp_path / "out"
    )
    assert len(records) == 5


def test_extract_frame_manifest_command_failure_carries_diagnostic(tmp_path, media_file):
    import sys

    chunk = VideoChunk("v#000", "v", 0.0, 5.0)
    failing = f'{sys.executable} -c "import sys; sys.stderr.write(\'decoder exploded\'); sys.exit(2)"'
    with pytest.raises(IngestError, match="decoder exploded"):
        extract_frame_manifest(chunk, 1.0, media_path=str(media_file), frame_cmd=failing, outdir=tmp_path / "out")


def test_extract_frame_manifest_missing_media(tmp_path):
    chunk = VideoChunk("v#000", "v", 0.0, 5.0)
    with pytest.raises(FileNotFoundError):
        extract_frame_manifest(
            chunk, 1.0, media_path=str(tmp_path / "absent.mp4"), frame_cmd=STUB_FRAME_CMD, outdir=tmp_path / "out"
        )


def test_frame_manifest_roundtrip(tmp_path, media_file):
    chunk = VideoChunk("v#000", "v", 0.0, 3.0)
    records = extract_frame_manifest(
        chunk, 1.0, media_path=str(media_file), frame_cmd=STUB_FRAME_CMD, outdir=tmp_path / "out"
    )
    manifest = tmp_path / "frames.jsonl"
    write_frame_manifest(records, manifest)
    assert read_frame_manifest(manifest) == records


def test_load_corpus_manifest_resolves_paths_and_rejects_duplicates(tmp_path):
    manifest = tmp_path / "corpus.jsonl"
    (tmp_path / "media").mkdir()
    (tmp_path / "media" / "a.mp4").write_bytes(b"x")
    manifest.write_text(
        '{"video_id": "a", "duration_s": 10, "language": "en", "media_path": "media/a.mp4"}\n', encoding="utf-8"
    )
    metas = load_corpus_manifest(manifest)
    assert metas[0].media_path.endswith("media/a.mp4")
    assert metas[0].duration_s == 10.0

    manifest.write_text(
        '{"video_id": "a", "duration_s": 10}\n{"video_id": "a", "duration_s": 5}\n', encoding="utf-8"
    )
    with pytest.raises(InvalidInputError):
        load_corpus_manifest(manifest)
