from __future__ import annotations

import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest


class Wire:
    """Minimal wire-protocol driver for one kernel process."""

    def __init__(self, session_id: str = "t1"):
        self.session_id = session_id
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "fbkernel"],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )

    def send(self, kind: str, cell_id=None, session_id=None, **fields) -> dict:
        message = {
            "kind": kind,
            "session_id": self.session_id if session_id is None else session_id,
            "cell_id": cell_id,
            **fields,
        }
        assert self.proc.stdin and self.proc.stdout
        self.proc.stdin.write(json.dumps(message) + "\n")
        self.proc.stdin.flush()
        while True:
            line = self.proc.stdout.readline()
            if line == "":
                raise AssertionError("kernel died")
            reply = json.loads(line)
            if reply.get("kind") == "result" and reply.get("cell_id") == cell_id:
                return reply

    def init(self, snapshot: Path, workspace: Path, manifest=None, **payload) -> dict:
        return self.send(
            "init",
            payload={
                "snapshot_path": str(snapshot),
                "workspace": str(workspace),
                "plugin_manifest": manifest or [],
                **payload,
            },
        )

    def execute(self, cell_id: str, code: str) -> dict:
        return self.send("execute", cell_id=cell_id, code=code)["payload"]

    def alive(self) -> bool:
        return self.proc.poll() is None

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.send("shutdown")
            except Exception:
                pass
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()


def write_snapshot(path: Path, rows: int = 20) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "text", "timestamp", "topics"])
        for i in range(rows):
            writer.writerow(
                [
                    f"r{i:03d}",
                    f"feedback item {i}",
                    f"2024-04-{i % 28 + 1:02d}T00:00:00+00:00",
                    "bug" if i % 2 else "ui",
                ]
            )
    return path


@pytest.fixture
def wire(tmp_path):
    workspace = tmp_path / "ws"
    workspace.mkdir()
    snapshot = write_snapshot(tmp_path / "snap.csv")
    w = Wire()
    reply = w.init(snapshot, workspace, cell_timeout_s=8.0)
    assert reply["payload"]["ready"], reply
    yield w, workspace, snapshot
    w.close()
