"""Pipeline configuration: file loading, defaults, overrides, validation.

Every numeric constant the stages use is configuration with the documented
default, so ablations vary exactly these knobs. Relative paths in a config
file are resolved against the file's directory, which keeps bundled fixture
configs runnable from any working directory.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .backends.base import BackendConfig
from .critic import CriticThresholds
from .errors import ConfigError

BACKEND_ROLES = ("embedding", "chat", "entailment", "nli", "asr_primary", "asr_fallback", "translate")

_PATH_OPTION_KEYS = ("fixture_dir",)


@dataclass
class IngestConfig:
    max_chunk_s: float = 120.0
    frame_cmd: str = ""


@dataclass
class DksConfig:
    fps: float = 1.0
    budget: int = 128


@dataclass
class TranscriptRules:
    ttr_threshold: float = 0.18
    ttr_min_tokens: int = 20
    max_token_run: int = 8
    trigram_share: float = 0.40

    def as_kwargs(self) -> dict:
        return {
            "ttr_threshold": self.ttr_threshold,
            "ttr_min_tokens": self.ttr_min_tokens,
            "max_token_run": self.max_token_run,
            "trigram_share": self.trigram_share,
        }


@dataclass
class ConsolidateConfig:
    top_k: int = 50
    retry_on_guard: bool = True


@dataclass
class RuntimeConfig:
    max_workers: int = 1
    backend_max_concurrency: int = 4


@dataclass
class PipelineConfig:
    corpus: str = ""
    queries: str = ""
    cache_dir: str = "cache"
    output: str = ""  # empty: <cache_dir>/submission.jsonl
    backend_mode: str = "mock"
    ingest: IngestConfig = field(default_factory=IngestConfig)
    dks: DksConfig = field(default_factory=DksConfig)
    transcripts: TranscriptRules = field(default_factory=TranscriptRules)
    critic: CriticThresholds = field(default_factory=CriticThresholds)
    consolidate: ConsolidateConfig = field(default_factory=ConsolidateConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)
    backends: dict[str, BackendConfig] = field(default_factory=dict)

    def __post_init__(self):
        for role in BACKEND_ROLES:
            self.backends.setdefault(role, BackendConfig())

    def validate(self) -> None:
        crit = self.critic
        if not 0.0 < crit.unsupported < crit.weak <= 1.0:
            raise ConfigError(
                "critic thresholds must satisfy 0 < critic.unsupported_threshold < critic.weak_threshold <= 1, "
                f"got {crit.unsupported} and {crit.weak}"
            )
        if not 0.0 <= crit.contradiction <= 1.0:
            raise ConfigError(f"critic.contradiction_threshold must be in [0, 1], got {crit.contradiction}")
        if crit.max_rounds < 1:
            raise ConfigError(f"critic.max_rounds must be >= 1, got {crit.max_rounds}")
        if not 0.0 <= self.transcripts.ttr_threshold <= 1.0:
            raise ConfigError(f"transcripts.ttr_threshold must be in [0, 1], got {self.transcripts.ttr_threshold}")
        if not 0.0 <= self.transcripts.trigram_share <= 1.0:
            raise ConfigError(f"transcripts.trigram_share must be in [0, 1], got {self.transcripts.trigram_share}")
        if self.transcripts.ttr_min_tokens < 1:
            raise ConfigError(f"transcripts.ttr_min_tokens must be >= 1, got {self.transcripts.ttr_min_tokens}")
        if self.transcripts.max_token_run < 2:
            raise ConfigError(f"transcripts.max_token_run must be >= 2, got {self.transcripts.max_token_run}")
        if self.ingest.max_chunk_s <= 0:
            raise ConfigError(f"ingest.max_chunk_s must be positive, got {self.ingest.max_chunk_s}")
        if self.dks.fps <= 0:
            raise ConfigError(f"dks.fps must be positive, got {self.dks.fps}")
        if self.dks.budget < 1:
            raise ConfigError(f"dks.budget must be positive, got {self.dks.budget}")
        if self.consolidate.top_k < 1:
            raise ConfigError(f"consolidate.top_k must be positive, got {self.consolidate.top_k}")
        if self.runtime.max_workers < 1:
            raise ConfigError(f"runtime.max_workers must be >= 1, got {self.runtime.max_workers}")
        if self.runtime.backend_max_concurrency < 1:
            raise ConfigError(f"runtime.backend_max_concurrency must be >= 1, got {self.runtime.backend_max_concurrency}")
        if self.backend_mode not in ("mock", "remote"):
            raise ConfigError(f"backend_mode must be 'mock' or 'remote', got {self.backend_mode!r}")
        for role, cfg in self.backends.items():
            if role not in BACKEND_ROLES:
                raise ConfigError(f"unknown backend role {role!r}; expected one of {BACKEND_ROLES}")
            cfg.validate(role)

    def to_dict(self) -> dict:
        return {
            "corpus": self.corpus,
            "queries": self.queries,
            "cache_dir": self.cache_dir,
            "output": self.output,
            "backend_mode": self.backend_mode,
            "ingest": {"max_chunk_s": self.ingest.max_chunk_s, "frame_cmd": self.ingest.frame_cmd},
            "dks": {"fps": self.dks.fps, "budget": self.dks.budget},
            "transcripts": self.transcripts.as_kwargs(),
            "critic": {
                "max_rounds": self.critic.max_rounds,
                "unsupported_threshold": self.critic.unsupported,
                "weak_threshold": self.critic.weak,
                "contradiction_threshold": self.critic.contradiction,
            },
            "consolidate": {"top_k": self.consolidate.top_k, "retry_on_guard": self.consolidate.retry_on_guard},
            "runtime": {
                "max_workers": self.runtime.max_workers,
                "backend_max_concurrency": self.runtime.backend_max_concurrency,
            },
            "backends": {role: self.backends[role].to_dict() for role in BACKEND_ROLES},
        }

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def _coerce_override_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except (ValueError, TypeError):
        return raw


def parse_override(spec: str) -> tuple[str, Any]:
    """Parse ``key=value``; dashes in keys normalize to underscores."""
    if "=" not in spec:
        raise ConfigError(f"override must look like key=value, got {spec!r}")
    key, raw = spec.split("=", 1)
    key = key.strip().replace("-", "_")
    if not key:
        raise ConfigError(f"override has an empty key: {spec!r}")
    return key, _coerce_override_value(raw.strip())


def _set_dotted(tree: dict, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = tree
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {dotted!r} descends into a non-mapping value")
    node[parts[-1]] = value


_SECTION_KEY_ALIASES = {
    "unsupported_threshold": "unsupported",
    "weak_threshold": "weak",
    "contradiction_threshold": "contradiction",
}


def _build_section(cls, data: dict, section: str):
    kwargs = {}
    valid = set(cls.__dataclass_fields__.keys())
    for key, value in data.items():
        attr = _SECTION_KEY_ALIASES.get(key, key)
        if attr not in valid:
            raise ConfigError(f"unknown config key {section}.{key}")
        kwargs[attr] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"invalid {section} section: {exc}") from exc


def _build_backend(role: str, data: dict, base_dir: Optional[Path]) -> BackendConfig:
    valid = {"kind", "endpoint", "model_name", "timeout_s", "max_retries", "script_path", "options"}
    unknown = set(data.keys()) - valid
    if unknown:
        raise ConfigError(f"unknown config key backends.{role}.{sorted(unknown)[0]}")
    cfg = BackendConfig(
        kind=data.get("kind", "mock"),
        endpoint=data.get("endpoint", ""),
        model_name=data.get("model_name", ""),
        timeout_s=float(data.get("timeout_s", 30.0)),
        max_retries=int(data.get("max_retries", 2)),
        script_path=data.get("script_path", ""),
        options=dict(data.get("options", {})),
    )
    if base_dir is not None:
        if cfg.script_path and not Path(cfg.script_path).is_absolute():
            cfg.script_path = str((base_dir / cfg.script_path).resolve())
        for key in _PATH_OPTION_KEYS:
            value = cfg.options.get(key)
            if value and not Path(value).is_absolute():
                cfg.options[key] = str((base_dir / value).resolve())
    return cfg


def load_config(path: Optional[Path] = None, overrides: Optional[dict[str, Any]] = None) -> PipelineConfig:
    """Load YAML (or JSON) config, apply dotted-key overrides, validate.

    Overrides win over file values; an empty or missing section falls back to
    documented defaults. Violated invariants raise ConfigError naming the key.
    """
    tree: dict = {}
    base_dir: Optional[Path] = None
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        base_dir = path.parent.resolve()
        loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config root must be a mapping, got {type(loaded).__name__}")
        tree = loaded

    for dotted, value in (overrides or {}).items():
        _set_dotted(tree, dotted.replace("-", "_"), value)

    known_top = {
        "corpus", "queries", "cache_dir", "output", "backend_mode",
        "ingest", "dks", "transcripts", "critic", "consolidate", "runtime", "backends",
    }
    unknown = set(tree.keys()) - known_top
    if unknown:
        raise ConfigError(f"unknown config key {sorted(unknown)[0]}")

    backends_tree = tree.get("backends", {}) or {}
    runtime_tree = dict(tree.get("runtime", {}) or {})
    if "max_concurrency" in (backends_tree or {}):
        runtime_tree.setdefault("backend_max_concurrency", backends_tree.pop("max_concurrency"))
    backends = {
        role: _build_backend(role, dict(backends_tree.get(role, {}) or {}), base_dir) for role in BACKEND_ROLES
    }
    unknown_roles = set(backends_tree.keys()) - set(BACKEND_ROLES)
    if unknown_roles:
        raise ConfigError(f"unknown backend role backends.{sorted(unknown_roles)[0]}")

    config = PipelineConfig(
        corpus=str(tree.get("corpus", "")),
        queries=str(tree.get("queries", "")),
        cache_dir=str(tree.get("cache_dir", "cache")),
        output=str(tree.get("output", "")),
        backend_mode=str(tree.get("backend_mode", "mock")),
        ingest=_build_section(IngestConfig, dict(tree.get("ingest", {}) or {}), "ingest"),
        dks=_build_section(DksConfig, dict(tree.get("dks", {}) or {}), "dks"),
        transcripts=_build_section(TranscriptRules, dict(tree.get("transcripts", {}) or {}), "transcripts"),
        critic=_build_section(CriticThresholds, dict(tree.get("critic", {}) or {}), "critic"),
        consolidate=_build_section(ConsolidateConfig, dict(tree.get("consolidate", {}) or {}), "consolidate"),
        runtime=_build_section(RuntimeConfig, runtime_tree, "runtime"),
        backends=backends,
    )

    if base_dir is not None:
        for attr in ("corpus", "queries", "cache_dir", "output"):
            value = getattr(config, attr)
            if value and not Path(value).is_absolute():
                setattr(config, attr, str((base_dir / value).resolve()))

    config.validate()
    return config
