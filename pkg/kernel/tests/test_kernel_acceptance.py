"""Kernel acceptance: default timeout bound and the plugin path.

The shared executor conformance suite lives in the engine repo's test
tree (tests/test_executor_conformance.py) and runs against this kernel
when it is installed; these tests cover what only the real kernel can
show: the 30 s default wall clock and an end-to-end plugin artifact
served over HTTP.
"""

from __future__ import annotations

import json
import time

import pytest

from conftest import Wire, write_snapshot


def test_default_timeout_30s_enforced_within_2s(tmp_path):
    workspace = tmp_path / "ws"
    workspace.mkdir()
    snapshot = write_snapshot(tmp_path / "snap.csv", rows=3)
    w = Wire()
    try:
        reply = w.init(snapshot, workspace)  # no cell_timeout_s: default 30
        assert reply["payload"]["ready"]
        started = time.monotonic()
        result = w.execute("c1", "import time\ntime.sleep(120)")
        elapsed = time.monotonic() - started
        assert result["status"] == "timeout"
        assert 28.0 <= elapsed <= 32.0, f"timeout fired after {elapsed:.1f}s"
        assert w.execute("c2", "1 + 1")["output"] == "2"
        print(f"\nKERNEL ACCEPTANCE PASS: 30 s timeout fired after {elapsed:.1f}s")
    finally:
        w.close()


SEVEN_TOPICS = [
    "bug", "ui", "performance", "feature request",
    "billing", "sync", "documentation",
]


def test_issue_river_plugin_artifact_retrievable_by_url(tmp_path):
    engine_mod = pytest.importorskip("feedbacklens.service.state")
    from starlette.testclient import TestClient

    from feedbacklens.config import EngineConfig
    from feedbacklens.gateway import Gateway, MockBackend
    from feedbacklens.service import create_app

    config = EngineConfig(data_dir=tmp_path / "data")
    config.kernel.executor = "kernel"
    config.kernel.cell_timeout_s = 60.0

    rules = [
        (r"Request: Draw an issue river for top 7 topics\.\s*$",
         '```json\n[{"description": "Render the issue river plugin over the'
         ' topic and timestamp columns", "depends_on": []}]\n```'),
        (r"Task: Render the issue river plugin",
         "```python\nissue_river(df, topic_column='topics',"
         " time_column='timestamp', top_n=7)\n```"),
        (r"reviewing whether", "FINISH"),
        (r"Summarize the analysis",
         "Rendered the issue river for the top 7 topics as issue_river.png."),
    ]
    state = engine_mod.EngineState(
        config, gateway=Gateway(MockBackend(rules=rules, embed_dim=32))
    )
    rows = []
    for i in range(42):
        rows.append(json.dumps({
            "id": f"r{i:03d}",
            "text": f"feedback about {SEVEN_TOPICS[i % 7]} number {i}",
            "timestamp": f"2024-{(i % 3) + 4:02d}-{(i % 27) + 1:02d}T00:00:00Z",
        }))
    report = state.ingest(("\n".join(rows) + "\n").encode(), "jsonl")
    assert report.accepted == 42
    for i in range(42):
        state.store.set_topics(f"r{i:03d}", [SEVEN_TOPICS[i % 7]], 1)

    with TestClient(create_app(state=state)) as client:
        handle = client.post("/sessions", json={}).json()
        response = client.post(
            f"/sessions/{handle['id']}/ask",
            json={"question": "Draw an issue river for top 7 topics."},
        ).json()
        assert response["status"] == "answered", response["text"]
        images = [a for a in response["artifacts"] if a["kind"] == "image"]
        assert images, response["artifacts"]
        river = next(a for a in images if a["path"] == "issue_river.png")
        blob = client.get(river["url"])
        assert blob.status_code == 200
        assert blob.content[:8] == b"\x89PNG\r\n\x1a\n"
        client.delete(f"/sessions/{handle['id']}")
    state.close()
    print("\nKERNEL ACCEPTANCE PASS: issue_river artifact served over HTTP as PNG")
