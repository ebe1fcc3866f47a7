from __future__ import annotations

import json

import pytest

from feedbacklens.gateway import Gateway, MockBackend
from feedbacklens.store import RecordStore


@pytest.fixture
def store():
    s = RecordStore(":memory:")
    yield s
    s.close()


@pytest.fixture
def mock_backend():
    return MockBackend(embed_dim=32, seed=7)


@pytest.fixture
def gateway(mock_backend):
    return Gateway(mock_backend, chat_model="test-model", embed_model="test-embed")


def jsonl_bytes(rows: list[dict]) -> bytes:
    return ("\n".join(json.dumps(r) for r in rows) + "\n").encode("utf-8")


@pytest.fixture
def sample_rows():
    return [
        {"id": "a1", "text": "app crashes on startup", "timestamp": "2024-04-01T10:00:00Z", "source": "store"},
        {"id": "a2", "text": "please add dark mode", "timestamp": "2024-04-02T11:30:00Z", "language": "en"},
        {"id": "a3", "text": "love the new update", "timestamp": "2024-04-03T09:15:00+02:00", "meta": {"country": "de"}},
    ]
