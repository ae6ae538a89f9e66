import threading
import time

import pytest
from hypothesis import given
from hypothesis import strategies as st

from craft.errors import InvalidInputError, TranscriptionError, UnsupportedLanguageError
from craft.ingest import VideoMeta
from craft.transcripts import (
    Transcript,
    TranscriptStore,
    is_degenerate,
    tokenize,
    transcribe,
    translate_if_needed,
    type_token_ratio,
)


def test_tokenize_casefold_and_split():
    assert tokenize("A a  b") == ["a", "a", "b"]


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_count():
    assert len(tokenize("x y z x y z")) == 6


def test_ttr_repeated_token():
    assert type_token_ratio(["ok"] * 20) == 0.05


def test_ttr_all_unique():
    assert type_token_ratio(["a", "b", "c", "d"]) == 1.0


def test_ttr_hand_count():
    assert type_token_ratio(["a", "a", "b", "b", "c"]) == 0.6


def test_ttr_empty_raises():
    with pytest.raises(InvalidInputError):
        type_token_ratio([])


@given(st.lists(st.integers(min_value=0, max_value=30), min_size=1, max_size=60))
def test_ttr_bounds_property(values):
    tokens = [f"t{v}" for v in values]
    ttr = type_token_ratio(tokens)
    assert 0.0 < ttr <= 1.0
    assert (ttr == 1.0) == (len(set(tokens)) == len(tokens))


# --- degeneracy rules ---------------------------------------------------------


def test_low_ttr_flags_twenty_copies():
    verdict = is_degenerate("ok " * 20)
    assert verdict.flagged and verdict.reason == "low_ttr"
    assert verdict.metric_value == pytest.approx(0.05)


def test_token_run_flags_nineteen_identical():
    # 19 tokens: the TTR rule needs >= 20, so the consecutive-run rule fires.
    verdict = is_degenerate(" ".join(["stop"] * 19))
    assert verdict.flagged and verdict.reason == "token_run"
    assert verdict.metric_value == 19


def test_token_run_inside_diverse_text():
    words = ["alpha", "bravo", "charlie", "delta", "echo", "fox", "golf", "hotel", "india", "juliet", "kilo"]
    text = " ".join(words + ["stop"] * 8)  # 19 tokens total
    verdict = is_degenerate(text)
    assert verdict.flagged and verdict.reason == "token_run"


def test_ttr_precedes_token_run():
    # 20 identical tokens trip both rules; low_ttr is checked first.
    verdict = is_degenerate(" ".join(["loop"] * 20))
    assert verdict.reason == "low_ttr"


def test_trigram_share_375_not_flagged():
    # trigram "a b c" appears 3 times among 8 overlapping trigrams = 0.375 < 0.40
    verdict = is_degenerate("a b c a b c a b c d")
    assert not verdict.flagged and verdict.reason == "none"


def test_trigram_share_at_threshold_flagged():
    # 9 tokens -> 7 trigrams, "a b c" x3 -> 3/7 ~ 0.4286 >= 0.40
    verdict = is_degenerate("a b c a b c a b c")
    assert verdict.flagged and verdict.reason == "trigram_dominance"
    assert verdict.metric_value == pytest.approx(3 / 7)


def test_empty_text_not_flagged():
    verdict = is_degenerate("")
    assert not verdict.flagged and verdict.reason == "none"


@given(st.lists(st.integers(min_value=0, max_value=10_000), min_size=5, max_size=80, unique=True))
def test_benign_text_never_flagged(values):
    # All-unique tokens: TTR = 1, longest run = 1, trigram share = 1/(n-2) < 0.4 for n >= 5.
    text = " ".join(f"w{v}" for v in values)
    assert not is_degenerate(text).flagged


def test_is_degenerate_deterministic():
    text = "flood waters rose rose rose rose near the river delta " * 2
    assert is_degenerate(text) == is_degenerate(text)


# --- transcribe with fallback and cache ---------------------------------------


class CountingAsr:
    def __init__(self, supported, segments, delay_s=0.0):
        self.supported_languages = supported
        self.segments = segments
        self.calls = 0
        self.delay_s = delay_s

    def transcribe(self, media_path, language):
        self.calls += 1
        if self.delay_s:
            time.sleep(self.delay_s)
        if self.supported_languages is not None and language not in self.supported_languages:
            raise UnsupportedLanguageError(language)
        return self.segments


SEGMENTS = [(0.0, 4.0, "Floodwater covers the highway"), (4.0, 9.0, "Rescue boats arrive downtown")]


def test_transcribe_uses_primary_for_supported_language(cache_dir):
    primary = CountingAsr({"en", "zh"}, SEGMENTS)
    fallback = CountingAsr(None, SEGMENTS)
    store = TranscriptStore(cache_dir)
    t = transcribe(VideoMeta("v1", 10.0, language="en", media_path="x"), primary, fallback, store)
    assert t.backend_used == "primary"
    assert (primary.calls, fallback.calls) == (1, 0)


def test_transcribe_falls_back_for_unsupported_language(cache_dir):
    primary = CountingAsr({"en", "zh"}, SEGMENTS)
    fallback = CountingAsr(None, SEGMENTS)
    store = TranscriptStore(cache_dir)
    t = transcribe(VideoMeta("v2", 10.0, language="my", media_path="x"), primary, fallback, store)
    assert t.backend_used == "fallback"
    assert (primary.calls, fallback.calls) == (0, 1)


def test_transcribe_cache_hit_makes_zero_backend_calls(cache_dir):
    primary = CountingAsr({"en"}, SEGMENTS)
    fallback = CountingAsr(None, SEGMENTS)
    store = TranscriptStore(cache_dir)
    meta = VideoMeta("v3", 10.0, language="en", media_path="x")
    transcribe(meta, primary, fallback, store)
    assert primary.calls == 1
    for _ in range(3):
        transcribe(meta, primary, fallback, store)
    assert primary.calls == 1 and fallback.calls == 0


def test_transcribe_both_backends_failing_raises(cache_dir):
    primary = CountingAsr({"en"}, SEGMENTS)
    fallback = CountingAsr({"en"}, SEGMENTS)  # fallback that also refuses
    store = TranscriptStore(cache_dir)
    with pytest.raises(TranscriptionError):
        transcribe(VideoMeta("v4", 10.0, language="my", media_path="x"), primary, fallback, store)


def test_transcribe_concurrent_requests_coalesce(cache_dir):
    primary = CountingAsr({"en"}, SEGMENTS, delay_s=0.05)
    fallback = CountingAsr(None, SEGMENTS)
    store = TranscriptStore(cache_dir)
    meta = VideoMeta("v5", 10.0, language="en", media_path="x")
    threads = [threading.Thread(target=transcribe, args=(meta, primary, fallback, store)) for _ in range(4)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    assert primary.calls == 1


def test_transcribe_degenerate_is_cached_and_marked(cache_dir):
    degenerate_segments = [(0.0, 30.0, "stop " * 25)]
    primary = CountingAsr({"en"}, degenerate_segments)
    fallback = CountingAsr(None, degenerate_segments)
    store = TranscriptStore(cache_dir)
    t = transcribe(VideoMeta("v6", 30.0, language="en", media_path="x"), primary, fallback, store)
    assert t.is_degenerate and t.degeneracy.reason == "low_ttr"
    again = transcribe(VideoMeta("v6", 30.0, language="en", media_path="x"), primary, fallback, store)
    assert again.is_degenerate
    assert primary.calls == 1


# --- translation ---------------------------------------------------------------


class CountingTranslator:
    def __init__(self, output="TRANSLATED", fail=False):
        self.output = output
        self.fail = fail
        self.calls = 0

    def translate(self, text, source_lang):
        self.calls += 1
        if self.fail:
            raise RuntimeError("translator offline")
        return self.output


def _transcript(language="en", segments=SEGMENTS, degenerate=False):
    t = Transcript(video_id="v", language=language, segments=list(segments), backend_used="primary")
    if degenerate:
        t.degeneracy = is_degenerate("stop " * 25)
        assert t.degeneracy.flagged
    return t


def test_translate_english_is_identity_with_zero_calls():
    translator = CountingTranslator()
    t = translate_if_needed(_transcript("en"), translator)
    assert t.english_text == t.full_text
    assert translator.calls == 0


def test_translate_non_english_uses_backend():
    translator = CountingTranslator(output="The flood covered the road")
    t = translate_if_needed(_transcript("zh"), translator)
    assert t.english_text == "The flood covered the road"
    assert translator.calls == 1


def test_translate_skips_degenerate():
    translator = CountingTranslator()
    t = translate_if_needed(_transcript("zh", degenerate=True), translator)
    assert t.english_text is None
    assert translator.calls == 0


def test_translate_failure_records_warning_and_keeps_transcript():
    translator = CountingTranslator(fail=True)
    warnings = []
    t = translate_if_needed(_transcript("zh"), translator, warnings=warnings)
    assert t.english_text is None
    assert warnings and "translation failed" in warnings[0]


def test_transcript_store_roundtrip(cache_dir):
    store = TranscriptStore(cache_dir)
    t = _transcript("zh")
    t.english_text = "hello"
    store.put(t)
    loaded = store.get("v")
    assert loaded is not None
    assert loaded.to_dict() == t.to_dict()
    assert loaded.full_text == t.full_text
