"""End-to-end wire check: the engine's remote clients against a live adapter.

Skipped when the engine package is not installed; the adapters remain
independently testable through the contract suite.
"""

import threading
import time

import pytest

craft_backends = pytest.importorskip("craft.backends")

import uvicorn

from model_servers import AdapterConfig, create_app

from conftest import CONTRACT_FIXTURES_DIR


@pytest.fixture(scope="module")
def live_server():
    config = AdapterConfig(asr_fixture_dir=str(CONTRACT_FIXTURES_DIR / "media"), asr_languages={"en"})
    app = create_app(config)
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("adapter server failed to start")
        time.sleep(0.01)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


def test_remote_clients_round_trip(live_server):
    from craft.backends import EvidenceRef
    from craft.backends.remote import (
        RemoteAsr,
        RemoteEmbedding,
        RemoteEntailment,
        RemoteNli,
        RemoteTranslate,
        RemoteTransport,
    )
    from craft.errors import UnsupportedLanguageError

    transport = RemoteTransport(live_server, timeout_s=10.0)

    embedding = RemoteEmbedding(transport, "hash-v1-64")
    vectors = embedding.embed_text(["floodwater covers the highway", "boats arrive"])
    assert len(vectors) == 2 and len(vectors[0]) == 64

    nli = RemoteNli(transport, "lexical-v1")
    probs = nli.nli_probs("The gate was open.", "The gate was closed.")
    assert abs(sum(probs) - 1.0) <= 1e-6 and probs[2] > 0.5

    entailment = RemoteEntailment(transport, "overlap-v1")
    score = entailment.entailment_score(
        "Floodwater covers the highway.",
        EvidenceRef("v#000", 0.0, 4.0, "floodwater covers the highway"),
    )
    assert score == pytest.approx(1.0)

    asr = RemoteAsr(transport, "sidecar-v1", supported_languages=None)
    segments = asr.transcribe(str(CONTRACT_FIXTURES_DIR / "media" / "sample.mp4"), "en")
    assert segments[0][2] == "Floodwater covers the highway"

    with pytest.raises(UnsupportedLanguageError):
        asr.transcribe(str(CONTRACT_FIXTURES_DIR / "media" / "sample.mp4"), "xx-unknown")

    translator = RemoteTranslate(transport, "marker-v1")
    assert translator.translate("la crue", "fr") == "[fr->en] la crue"
