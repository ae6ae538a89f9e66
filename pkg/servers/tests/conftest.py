from __future__ import annotations

import os
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from model_servers import AdapterConfig, create_app

# Shared contract fixtures published alongside the wire contract; override the
# location with CONTRACT_FIXTURES_DIR when running from a different layout.
CONTRACT_FIXTURES_DIR = Path(
    os.environ.get("CONTRACT_FIXTURES_DIR", Path(__file__).resolve().parents[2] / "contract" / "fixtures")
)


@pytest.fixture(scope="session")
def adapter_config() -> AdapterConfig:
    return AdapterConfig(
        asr_fixture_dir=str(CONTRACT_FIXTURES_DIR / "media"),
        asr_languages={"en", "zh", "my"},
    )


@pytest.fixture(scope="session")
def client(adapter_config) -> TestClient:
    return TestClient(create_app(adapter_config))
