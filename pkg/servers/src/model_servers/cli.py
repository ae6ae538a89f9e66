"""Serve the adapters: ``craft-model-server --port 8901 --model nli=hf:...``."""

from __future__ import annotations

import argparse

from .config import DEFAULT_MODELS, AdapterConfig
from .engines import EngineError


def parse_args(argv=None) -> AdapterConfig:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8901)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-batch-size", type=int, default=64)
    parser.add_argument(
        "--model",
        action="append",
        default=[],
        metavar="ENDPOINT=MODEL_ID",
        help="Override the model for an endpoint, e.g. nli=hf:some/mnli-cross-encoder. Repeatable.",
    )
    parser.add_argument("--disable", action="append", default=[], metavar="ENDPOINT", help="Disable an endpoint.")
    parser.add_argument("--asr-languages", default="", help="Comma-separated allowlist; empty accepts all.")
    parser.add_argument("--asr-fixture-dir", default="", help="Directory searched for ASR sidecar files.")
    args = parser.parse_args(argv)

    models = dict(DEFAULT_MODELS)
    for spec in args.model:
        if "=" not in spec:
            parser.error(f"--model expects ENDPOINT=MODEL_ID, got {spec!r}")
        endpoint, model_id = spec.split("=", 1)
        models[endpoint.strip()] = model_id.strip()
    for endpoint in args.disable:
        models.pop(endpoint, None)

    languages = {lang.strip() for lang in args.asr_languages.split(",") if lang.strip()} or None
    return AdapterConfig(
        port=args.port,
        host=args.host,
        device=args.device,
        max_batch_size=args.max_batch_size,
        models=models,
        asr_languages=languages,
        asr_fixture_dir=args.asr_fixture_dir,
    )


def main(argv=None) -> int:
    import uvicorn

    from .app import create_app

    config = parse_args(argv)
    try:
        app = create_app(config)
    except (EngineError, ValueError) as exc:
        print(f"startup error: {exc}")
        return 1
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
