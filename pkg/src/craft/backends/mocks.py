"""Deterministic in-process mock backends.

Every mock is a pure function of (input, seed, fixture files): two pipeline
runs with identical config produce byte-identical outputs. Chat-style mocks
work in two layers: scripted fixture responses keyed by (role, prompt
fingerprint) take precedence; otherwise a deterministic rule engine derives a
plausible response from the prompt document itself. ``strict`` scripts
disable the rule layer and fail loudly on a fingerprint miss.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
from pathlib import Path
from typing import Optional

from .. import promptdoc
from ..errors import BackendError, UnsupportedLanguageError
from ..transcripts import normalize_tokens as _norm_tokens
from .base import BackendConfig, BackendSet, CallCounter, EvidenceRef, prompt_fingerprint

logger = logging.getLogger(__name__)

# Antonym pairs the rule-based NLI and adjudicator treat as contradictory.
DEFAULT_ANTONYMS = [
    ("open", "closed"),
    ("opened", "closed"),
    ("alive", "dead"),
    ("rose", "fell"),
    ("rising", "falling"),
    ("increased", "decreased"),
    ("began", "ended"),
    ("on", "off"),
    ("north", "south"),
    ("day", "night"),
]


class MockEmbedding:
    """Seeded hash of the input expanded into a unit vector."""

    def __init__(self, dim: int = 32, seed: str = "v1", counter: Optional[CallCounter] = None):
        if dim < 2:
            raise ValueError("embedding dim must be >= 2")
        self.dim = dim
        self.seed = seed
        self.counter = counter

    def _vector(self, kind: str, item: str) -> list[float]:
        base = f"{self.seed}|{kind}|{item}".encode("utf-8")
        values: list[float] = []
        block = 0
        while len(values) < self.dim:
            digest = hashlib.sha256(base + block.to_bytes(4, "big")).digest()
            for i in range(0, len(digest) - 7, 8):
                raw = int.from_bytes(digest[i : i + 8], "big")
                values.append(raw / 2**63 - 1.0)  # uniform-ish in [-1, 1)
                if len(values) == self.dim:
                    break
            block += 1
        norm = math.sqrt(sum(v * v for v in values))
        return [v / norm for v in values]

    def embed_text(self, texts: list[str]) -> list[list[float]]:
        if self.counter:
            self.counter.hit("embed_text")
        return [self._vector("text", t) for t in texts]

    def embed_image(self, refs: list[str]) -> list[list[float]]:
        if self.counter:
            self.counter.hit("embed_image")
        return [self._vector("image", r) for r in refs]


class MockEntailment:
    """Normalized token overlap between the claim and the evidence window.

    Monotone in overlap: identical text scores 1.0, disjoint text 0.0.
    """

    def __init__(self, counter: Optional[CallCounter] = None):
        self.counter = counter

    def entailment_score(self, claim_text: str, evidence: EvidenceRef) -> float:
        if self.counter:
            self.counter.hit("entailment")
        claim = set(_norm_tokens(claim_text))
        if not claim:
            return 0.0
        window = set(_norm_tokens(evidence.transcript_window))
        return len(claim & window) / len(claim)


class MockNli:
    """Rule-based 3-way NLI over claim-text pairs.

    Near-identical sentences are entailment-dominant, sentences sharing an
    antonym pair are contradiction-dominant, everything else is neutral.
    """

    def __init__(self, antonyms: Optional[list[tuple[str, str]]] = None, counter: Optional[CallCounter] = None):
        pairs = antonyms if antonyms is not None else DEFAULT_ANTONYMS
        self.antonyms = {frozenset(p) for p in pairs}
        self.counter = counter

    def _has_antonym_pair(self, tokens_a: set[str], tokens_b: set[str]) -> bool:
        for pair in self.antonyms:
            a, b = tuple(pair) if len(pair) == 2 else (next(iter(pair)), next(iter(pair)))
            if (a in tokens_a and b in tokens_b) or (b in tokens_a and a in tokens_b):
                return True
        return False

    def nli_probs(self, premise: str, hypothesis: str) -> tuple[float, float, float]:
        if self.counter:
            self.counter.hit("nli")
        ta, tb = _norm_tokens(premise), _norm_tokens(hypothesis)
        if ta and ta == tb:
            return (0.90, 0.08, 0.02)
        if self._has_antonym_pair(set(ta), set(tb)):
            return (0.02, 0.08, 0.90)
        return (0.10, 0.85, 0.05)


class MockAsr:
    """Reads sidecar fixture files instead of decoding audio.

    Lookup order: ``<media_path>.asr.json`` next to the media file, then
    ``<fixture_dir>/<media stem>.asr.json``. A declared supported-language
    set makes the mock signal unsupported languages exactly like a real
    primary backend, driving the caller's fallback path.
    """

    def __init__(
        self,
        fixture_dir: Optional[Path] = None,
        supported_languages: Optional[set[str]] = None,
        role_label: str = "asr.primary",
        counter: Optional[CallCounter] = None,
        strict: bool = True,
    ):
        self.fixture_dir = Path(fixture_dir) if fixture_dir else None
        self.supported_languages = set(supported_languages) if supported_languages is not None else None
        self.role_label = role_label
        self.counter = counter
        self.strict = strict

    def _sidecar_for(self, media_path: str) -> Optional[Path]:
        sibling = Path(str(media_path) + ".asr.json")
        if sibling.exists():
            return sibling
        if self.fixture_dir is not None:
            named = self.fixture_dir / f"{Path(media_path).stem}.asr.json"
            if named.exists():
                return named
        return None

    def transcribe(self, media_path: str, language: str) -> list[tuple[float, float, str]]:
        if self.counter:
            self.counter.hit(self.role_label)
        if self.supported_languages is not None and language not in self.supported_languages:
            raise UnsupportedLanguageError(f"{self.role_label} does not support language {language!r}")
        sidecar = self._sidecar_for(media_path)
        if sidecar is None:
            if self.strict:
                raise BackendError(f"no ASR fixture sidecar for {media_path}", role=self.role_label)
            return []
        payload = json.loads(sidecar.read_text(encoding="utf-8"))
        return [(float(seg["start"]), float(seg["end"]), str(seg["text"])) for seg in payload["segments"]]


class MockTranslate:
    """Scripted translations keyed by source-text fingerprint, with a marker rule fallback."""

    def __init__(self, script_path: Optional[Path] = None, counter: Optional[CallCounter] = None, strict: bool = False):
        self.by_fingerprint: dict[str, str] = {}
        self.strict = strict
        self.counter = counter
        if script_path:
            payload = json.loads(Path(script_path).read_text(encoding="utf-8"))
            self.by_fingerprint = dict(payload.get("by_fingerprint", {}))

    def translate(self, text: str, source_lang: str) -> str:
        if self.counter:
            self.counter.hit("translate")
        fp = prompt_fingerprint(text)
        if fp in self.by_fingerprint:
            return self.by_fingerprint[fp]
        if self.strict:
            raise BackendError(f"no scripted translation for fingerprint {fp}", role="translate")
        return f"[{source_lang}->en] {text}"


def _ensure_sentence(text: str) -> str:
    text = text.strip()
    if text and text[-1] not in ".!?":
        text += "."
    return text


def _split_sentences(text: str) -> list[str]:
    parts = re.split(r"(?<=[.!?])\s+", text.strip())
    return [p.strip() for p in parts if p.strip()]


class MockChat:
    """Deterministic chat backend for the extract/persona/adjudicate/consolidate roles.

    Scripted responses (from a JSON fixture) are matched first by exact
    ``(role, fingerprint)`` and then by ``(role, substring)``. Without a
    script hit, a per-role rule engine parses the prompt document and
    produces a stable response. In strict mode a script miss raises,
    naming the fingerprint so the fixture can be extended.
    """

    def __init__(
        self,
        script_path: Optional[Path] = None,
        strict: bool = False,
        antonyms: Optional[list[tuple[str, str]]] = None,
        counter: Optional[CallCounter] = None,
    ):
        self.strict = strict
        self.counter = counter
        self.responses: list[dict] = []
        pairs = antonyms if antonyms is not None else DEFAULT_ANTONYMS
        self.antonyms = {frozenset(p) for p in pairs}
        if script_path:
            payload = json.loads(Path(script_path).read_text(encoding="utf-8"))
            self.responses = list(payload.get("responses", []))
            if "strict" in payload:
                self.strict = bool(payload["strict"])

    def chat_complete(self, prompt: str, role: str) -> str:
        if self.counter:
            self.counter.hit(f"chat.{role}")
        fp = prompt_fingerprint(prompt)
        for entry in self.responses:
            if entry.get("role") not in (None, role):
                continue
            if entry.get("fingerprint") == fp:
                return entry["text"]
        for entry in self.responses:
            if entry.get("role") not in (None, role):
                continue
            needle = entry.get("match")
            if needle and needle in prompt:
                return entry["text"]
        if self.strict:
            raise BackendError(f"no scripted response for role={role} fingerprint={fp}", role=f"chat.{role}")
        return self._rule_response(prompt, role)

    def _rule_response(self, prompt: str, role: str) -> str:
        if role == "extract":
            return self._rule_extract(prompt)
        if role == "persona":
            return self._rule_persona(prompt)
        if role == "adjudicate":
            return self._rule_adjudicate(prompt)
        if role == "consolidate":
            return self._rule_consolidate(prompt)
        raise BackendError(f"mock chat has no rule for role {role!r}", role=f"chat.{role}")

    # --- per-role rule engines -------------------------------------------

    def _rule_extract(self, prompt: str) -> str:
        sections = promptdoc.split_sections(prompt)
        feedback = promptdoc.find_section(sections, promptdoc.SECTION_FEEDBACK)
        previous = promptdoc.find_section(sections, promptdoc.SECTION_PREVIOUS)
        if feedback and previous:
            return self._rule_reextract(feedback[1], previous[1])

        lines: list[str] = []
        original = promptdoc.find_section(sections, promptdoc.SECTION_TRANSCRIPT_ORIGINAL)
        english = promptdoc.find_section(sections, promptdoc.SECTION_TRANSCRIPT_ENGLISH)
        segments: list[tuple[float, float, str]] = []
        if original and original[1] != promptdoc.TRANSCRIPT_ABSENT_SENTINEL:
            segments = promptdoc.parse_segment_lines(original[1])
            language = original[0][len(promptdoc.SECTION_TRANSCRIPT_ORIGINAL):].strip(", )")
            if language == "en" or not english:
                for start, end, text in segments:
                    lines.append(promptdoc.render_claim_line("transcript", start, end, _ensure_sentence(text)))
            else:
                sentences = _split_sentences(english[1])
                for (start, end, _), sentence in zip(segments, sentences):
                    lines.append(promptdoc.render_claim_line("speech", start, end, _ensure_sentence(sentence)))

        visual = promptdoc.find_section(sections, promptdoc.SECTION_VISUAL)
        if visual:
            frames = promptdoc.parse_frame_lines(visual[1])
            if frames:
                mid_ts = frames[len(frames) // 2][0]
                lines.append(
                    promptdoc.render_claim_line(
                        "visual", mid_ts, mid_ts + 1.0, "The footage shows the scene described in the query."
                    )
                )
        return "\n".join(lines)

    def _rule_reextract(self, feedback_body: str, previous_body: str) -> str:
        """Apply critic feedback literally: drop weak and contradiction-flagged claims."""
        feedback = promptdoc.parse_feedback_lines(feedback_body)
        remove = {claim_id for claim_id, _ in feedback["weak"]}
        remove.update(id_b for _, id_b, _ in feedback["contradiction"])
        kept = []
        for claim_id, claim_line in promptdoc.parse_previous_claim_lines(previous_body):
            if claim_id not in remove:
                kept.append(claim_line)
        return "\n".join(kept)

    def _rule_persona(self, prompt: str) -> str:
        sections = promptdoc.split_sections(prompt)
        query = promptdoc.find_section(sections, promptdoc.SECTION_QUERY)
        words = [w for w in _norm_tokens(query[1] if query else "") if len(w) > 3][:3]
        topic = " ".join(words) if words else "the event"
        title = f"Correspondent covering {topic}"
        background = (
            f"A field correspondent assembling a sourced brief about {topic}, "
            "who insists every statement carry a citation to its supporting video."
        )
        return f"TITLE: {title}\nBACKGROUND: {background}"

    def _rule_adjudicate(self, prompt: str) -> str:
        texts = re.findall(r"^[AB] \([^)]*\): (.*)$", prompt, flags=re.MULTILINE)
        if len(texts) == 2:
            ta, tb = (set(_norm_tokens(t)) for t in texts)
            for pair in self.antonyms:
                a, b = tuple(pair)
                if (a in ta and b in tb) or (b in ta and a in tb):
                    return (
                        "INCONSISTENT: the two claims assert opposing states of the same subject. "
                        "HINT: drop or correct claim B at its cited time span."
                    )
        return "CONSISTENT: the claims describe related but compatible facts."

    def _rule_consolidate(self, prompt: str) -> str:
        sections = promptdoc.split_sections(prompt)
        packet = promptdoc.find_section(sections, promptdoc.SECTION_PACKET)
        if not packet:
            return ""
        groups: dict[str, tuple[str, list[str]]] = {}
        order: list[str] = []
        for _, claim_line, source_id in promptdoc.parse_packet_lines(packet[1]):
            text = claim_line.split("] ", 1)[1] if "] " in claim_line else claim_line
            key = " ".join(_norm_tokens(text))
            if key not in groups:
                groups[key] = (text, [])
                order.append(key)
            if source_id not in groups[key][1]:
                groups[key][1].append(source_id)
        lines = []
        for key in order:
            text, sources = groups[key]
            lines.append(promptdoc.render_statement_line(text, sorted(sources)))
        return "\n".join(lines)


def build_mock_backends(configs: dict[str, BackendConfig], counter: Optional[CallCounter] = None) -> BackendSet:
    """Assemble the full mock backend set from per-role configs."""
    counter = counter or CallCounter()

    def opt(role: str, key: str, default=None):
        return configs.get(role, BackendConfig()).options.get(key, default)

    def script(role: str) -> Optional[Path]:
        path = configs.get(role, BackendConfig()).script_path
        return Path(path) if path else None

    embedding = MockEmbedding(
        dim=int(opt("embedding", "dim", 32)), seed=str(opt("embedding", "seed", "v1")), counter=counter
    )
    chat = MockChat(
        script_path=script("chat"),
        strict=bool(opt("chat", "strict", False)),
        counter=counter,
    )
    entailment = MockEntailment(counter=counter)
    nli = MockNli(counter=counter)
    primary_langs = opt("asr_primary", "supported_languages", ["en", "zh", "es", "fr", "de", "ja", "ko", "pt", "ru", "ar"])
    asr_primary = MockAsr(
        fixture_dir=opt("asr_primary", "fixture_dir"),
        supported_languages=set(primary_langs),
        role_label="asr.primary",
        counter=counter,
        strict=bool(opt("asr_primary", "strict", True)),
    )
    asr_fallback = MockAsr(
        fixture_dir=opt("asr_fallback", "fixture_dir"),
        supported_languages=None,
        role_label="asr.fallback",
        counter=counter,
        strict=bool(opt("asr_fallback", "strict", True)),
    )
    translator = MockTranslate(script_path=script("translate"), counter=counter)
    return BackendSet(
        embedding=embedding,
        chat=chat,
        entailment=entailment,
        nli=nli,
        asr_primary=asr_primary,
        asr_fallback=asr_fallback,
        translator=translator,
        counter=counter,
    )
