"""Reference server-side adapters for the pipeline backend wire contract.

Exposes /v1/asr, /v1/translate, /v1/embeddings, /v1/nli, and /v1/entailment
with responses schema-identical to the engine's in-process mocks, so the
pipeline runs unmodified against this server in remote mode. Chat completions
are deliberately not served here; any OpenAI-compatible server fills that
role.

Each endpoint dispatches on its configured model identifier: deterministic
reference engines (``hash-v1-<dim>``, ``lexical-v1``, ``overlap-v1``,
``sidecar-v1``, ``marker-v1``) run anywhere with no weights, while ``hf:``,
``st:`` and ``whisper:`` prefixes load real models lazily.
"""

from .app import create_app
from .config import AdapterConfig

__all__ = ["AdapterConfig", "create_app"]

__version__ = "0.1.0"
