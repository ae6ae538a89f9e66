import pytest

from craft.dks import FrameScore, KeyframeClip, VisualInput
from craft.errors import ExtractionError, InvalidInputError, PersonaError
from craft.extraction import (
    PersonaQuery,
    build_prompt,
    extract_claims,
    load_queries,
    parse_claims,
    serialize_claims,
    synthesize_persona,
)
from craft.ingest import VideoChunk
from craft.transcripts import Transcript, is_degenerate


class ScriptedChat:
    def __init__(self, text):
        self.text = text
        self.calls = 0

    def chat_complete(self, prompt, role):
        self.calls += 1
        self.last_prompt = prompt
        self.last_role = role
        return self.text


class FailingChat:
    def chat_complete(self, prompt, role):
        raise TimeoutError("backend timed out")


PQ = PersonaQuery(
    query_id="q1",
    query_text="What damage did the flood cause downtown?",
    video_ids=("v1",),
    persona_title="City desk editor",
    persona_background="Edits daily flood coverage for a metro newsroom.",
)


def _visual():
    clip = KeyframeClip("q1", "v1", [FrameScore(0, 3.0, 0.9, "frames_px/v1#000/frame_000003.jpg")], 8)
    return VisualInput(kind="clip", video_id="v1", clip=clip)


def _chunks_visual():
    return VisualInput(kind="chunks", video_id="v1", chunks=(VideoChunk("v1#000", "v1", 0.0, 60.0),))


def _transcript(language="en", english_text=None, degenerate=False):
    segments = [(0.0, 4.0, "Floodwater covers the highway"), (4.0, 9.0, "Rescue boats arrive downtown")]
    if degenerate:
        segments = [(0.0, 30.0, "stop " * 25)]
    t = Transcript(video_id="v1", language=language, segments=segments, backend_used="primary")
    t.degeneracy = is_degenerate(t.full_text)
    t.english_text = english_text
    return t


# --- persona -------------------------------------------------------------------


def test_persona_synthesis_passthrough():
    chat = ScriptedChat("TITLE: Disaster recovery analyst\nBACKGROUND: Tracks urban flood response.")
    title, background = synthesize_persona("What happened?", None, chat)
    assert title == "Disaster recovery analyst"
    assert background == "Tracks urban flood response."
    assert chat.last_role == "persona"


def test_persona_title_clamped_to_twelve_tokens():
    long_title = " ".join(f"w{i}" for i in range(20))
    chat = ScriptedChat(f"TITLE: {long_title}\nBACKGROUND: b.")
    title, _ = synthesize_persona("q", None, chat)
    assert len(title.split()) == 12


def test_persona_empty_query_rejected():
    with pytest.raises(InvalidInputError):
        synthesize_persona("   ", None, ScriptedChat("TITLE: t\nBACKGROUND: b"))


def test_persona_malformed_response_raises():
    with pytest.raises(PersonaError):
        synthesize_persona("q", None, ScriptedChat("no structured output"))


# --- prompt assembly -------------------------------------------------------------


def test_prompt_section_order_fixed():
    prompt = build_prompt(PQ, _visual(), _transcript("en"))
    indices = [
        prompt.index("# Persona"),
        prompt.index("# Query"),
        prompt.index("# Visual Input"),
        prompt.index("# Transcript (original"),
        prompt.index("# Output Format"),
    ]
    assert indices == sorted(indices)
    assert "City desk editor" in prompt
    assert "frame: t=3.0" in prompt


def test_prompt_absent_transcript_uses_sentinel():
    prompt = build_prompt(PQ, _visual(), None)
    assert "[no transcript available]" in prompt
    assert "# Transcript (English)" not in prompt


def test_prompt_degenerate_transcript_same_as_absent():
    with_none = build_prompt(PQ, _visual(), None)
    with_degenerate = build_prompt(PQ, _visual(), _transcript(degenerate=True))
    assert with_none == with_degenerate


def test_prompt_non_english_includes_both_texts_original_first():
    transcript = _transcript("zh", english_text="The flood covered the road. Boats arrived.")
    prompt = build_prompt(PQ, _visual(), transcript)
    original_at = prompt.index("# Transcript (original, zh)")
    english_at = prompt.index("# Transcript (English)")
    assert original_at < english_at
    assert "The flood covered the road." in prompt


def test_prompt_english_transcript_has_no_translation_section():
    transcript = _transcript("en", english_text="Floodwater covers the highway Rescue boats arrive downtown")
    prompt = build_prompt(PQ, _visual(), transcript)
    assert "# Transcript (English)" not in prompt


def test_prompt_chunks_fallback_lists_chunk_windows():
    prompt = build_prompt(PQ, _chunks_visual(), _transcript("en"))
    assert "chunk: v1#000 [0.0-60.0)" in prompt


def test_prompt_feedback_sections_only_in_reextraction():
    base = build_prompt(PQ, _visual(), _transcript("en"))
    assert "# Critic Feedback" not in base
    claims, _ = parse_claims("[transcript|0.0-4.0] Floodwater covers the highway.", "q1", "v1")
    redo = build_prompt(PQ, _visual(), _transcript("en"), feedback_text="WEAK x :: y", previous_claims=claims)
    assert "# Critic Feedback" in redo and "# Previous Claims" in redo
    assert redo.index("# Critic Feedback") < redo.index("# Output Format")


# --- extraction call -------------------------------------------------------------


def test_extract_claims_passthrough_single_call():
    chat = ScriptedChat("[visual|0.0-1.0] A crowd gathers.")
    raw = extract_claims("PROMPT", chat, query_id="q1", video_id="v1")
    assert raw == "[visual|0.0-1.0] A crowd gathers."
    assert chat.calls == 1 and chat.last_role == "extract"


def test_extract_claims_failure_carries_ids():
    with pytest.raises(ExtractionError) as err:
        extract_claims("PROMPT", FailingChat(), query_id="q7", video_id="v9")
    assert err.value.query_id == "q7" and err.value.video_id == "v9"


def test_one_call_per_query_video_pair():
    chat = ScriptedChat("[visual|0.0-1.0] A crowd gathers.")
    queries = ["q1", "q2"]
    videos = ["v1", "v2", "v3"]
    for q in queries:
        for v in videos:
            extract_claims("PROMPT", chat, query_id=q, video_id=v)
    assert chat.calls == 6


# --- claim parsing ---------------------------------------------------------------


def test_parse_wellformed_line():
    claims, rejected = parse_claims("[visual|12.0-15.5] Floodwater covers the highway.", "q1", "v1")
    assert not rejected
    claim = claims[0]
    assert claim.modality == "visual"
    assert claim.span == (12.0, 15.5)
    assert claim.text == "Floodwater covers the highway."
    assert claim.source_video_id == "v1" and claim.query_id == "q1"


def test_parse_rejects_two_sentences():
    claims, rejected = parse_claims("[visual|1.0-2.0] Water rose. Roads closed.", "q1", "v1")
    assert not claims
    assert rejected[0].reason == "multi_sentence"


def test_parse_rejects_unknown_modality():
    claims, rejected = parse_claims("[audio|1.0-2.0] A siren sounds.", "q1", "v1")
    assert not claims
    assert rejected[0].reason == "unknown_modality"


def test_parse_rejects_garbage_and_never_drops_silently():
    raw = "Here are the claims:\n[visual|1.0-2.0] A crowd gathers.\n- bullet point"
    claims, rejected = parse_claims(raw, "q1", "v1")
    assert len(claims) == 1
    assert {r.reason for r in rejected} == {"bad_format"}
    assert len(rejected) == 2


def test_parse_rejects_bad_span_and_out_of_bounds():
    _, rejected = parse_claims("[visual|5.0-5.0] Water rose fast.", "q1", "v1")
    assert rejected[0].reason == "bad_span"
    _, rejected = parse_claims("[visual|5.0-99.0] Water rose fast.", "q1", "v1", max_duration_s=60.0)
    assert rejected[0].reason == "span_out_of_bounds"


def test_parse_rejects_missing_terminator():
    _, rejected = parse_claims("[visual|1.0-2.0] Water rose fast", "q1", "v1")
    assert rejected[0].reason == "no_terminator"


def test_parse_accepts_decimal_numbers_in_sentence():
    claims, rejected = parse_claims("[transcript|0.0-5.0] Officials reported 3.5 meters of water.", "q1", "v1")
    assert not rejected and claims[0].text.endswith("3.5 meters of water.")


def test_parse_zero_claims_is_valid_outcome():
    claims, rejected = parse_claims("nothing here", "q1", "v1")
    assert claims == [] and rejected


def test_parse_duplicate_lines_get_distinct_ids():
    raw = "[visual|1.0-2.0] A crowd gathers.\n[visual|1.0-2.0] A crowd gathers."
    claims, _ = parse_claims(raw, "q1", "v1")
    assert len(claims) == 2
    assert claims[0].claim_id != claims[1].claim_id


def test_serialize_parse_roundtrip():
    raw = "\n".join(
        [
            "[visual|12.0-15.5] Floodwater covers the highway.",
            "[speech|20.0-24.5] The mayor announces evacuations.",
            "[on_screen_text|3.0-4.0] A banner reads breaking news.",
        ]
    )
    claims, rejected = parse_claims(raw, "q1", "v1")
    assert not rejected
    again, rejected2 = parse_claims(serialize_claims(claims), "q1", "v1")
    assert not rejected2
    assert again == claims


def test_load_queries_roundtrip(tmp_path):
    path = tmp_path / "queries.jsonl"
    path.write_text(
        '{"query_id": "q1", "query_text": "what happened", "video_ids": ["v1", "v2"], '
        '"persona_title": "t", "persona_background": "b"}\n'
        '{"query_id": "q2", "query_text": "who said it", "video_ids": ["v1"]}\n',
        encoding="utf-8",
    )
    queries = load_queries(path)
    assert queries[0].has_persona and not queries[1].has_persona
    assert queries[0].video_ids == ("v1", "v2")

    path.write_text(
        '{"query_id": "q1", "query_text": "a", "video_ids": []}\n{"query_id": "q1", "query_text": "b", "video_ids": []}\n',
        encoding="utf-8",
    )
    with pytest.raises(InvalidInputError):
        load_queries(path)
