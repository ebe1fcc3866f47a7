"""Execution-side types and the wire-protocol client.

An Executor runs notebook-style cells for one session and reports each
cell's outcome as an ExecutionResult: status, captured logs, the textual
value of the last expression, and any files produced under the session
workspace. Two implementations exist: the in-process stub (stub.py) used
for tests and desk runs, and KernelClient, which drives an external
sandboxed kernel process over newline-delimited JSON messages on its
standard streams. Both answer every execute with exactly one result
carrying the matching cell id.
"""

from __future__ import annotations

import json
import subprocess
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from ..errors import ExecutorUnavailable, PluginLoadError, SnapshotMissing

ARTIFACT_KINDS = ("table", "image", "file")

_IMAGE_EXT = {".png", ".jpg", ".jpeg", ".gif", ".svg"}
_TABLE_EXT = {".csv", ".tsv", ".parquet", ".json"}


def artifact_kind_for(path: str | Path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix in _IMAGE_EXT:
        return "image"
    if suffix in _TABLE_EXT:
        return "table"
    return "file"


@dataclass
class Artifact:
    kind: str
    path: str  # workspace-relative
    url: str = ""
    caption: str = ""

    def to_dict(self) -> dict:
        return {"kind": self.kind, "path": self.path, "url": self.url, "caption": self.caption}

    @classmethod
    def from_dict(cls, d: dict) -> "Artifact":
        return cls(
            kind=d.get("kind", "file"),
            path=d.get("path", ""),
            url=d.get("url", ""),
            caption=d.get("caption", ""),
        )


@dataclass
class ExecutionResult:
    status: str  # ok | error | violation | timeout
    logs: str = ""
    output: str = ""
    artifacts: list[Artifact] = field(default_factory=list)
    exception: str | None = None

    def __post_init__(self) -> None:
        # exception text present exactly when the cell raised
        if self.status == "error" and not self.exception:
            raise ValueError("error results carry the exception text")
        if self.status != "error" and self.exception:
            raise ValueError("only error results carry an exception")

    def failure_text(self) -> str:
        """What the repair prompt should quote: the exception for errors,
        the reason line from the logs for violations and timeouts."""
        if self.exception:
            return self.exception
        if self.status in ("violation", "timeout"):
            lines = [l for l in self.logs.splitlines() if l.strip()]
            return lines[-1] if lines else self.status
        return ""

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "logs": self.logs,
            "output": self.output,
            "artifacts": [a.to_dict() for a in self.artifacts],
            "exception": self.exception,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExecutionResult":
        return cls(
            status=d["status"],
            logs=d.get("logs", ""),
            output=d.get("output", ""),
            artifacts=[Artifact.from_dict(a) for a in d.get("artifacts", [])],
            exception=d.get("exception"),
        )


class Executor(Protocol):
    """The contract the planner relies on; see module docstring."""

    def init(self, snapshot_path: str | Path, plugin_manifest: list[dict]) -> None: ...

    def execute(self, cell_id: str, code: str) -> ExecutionResult: ...

    def reset(self) -> None: ...

    def list_artifacts(self) -> list[Artifact]: ...

    def close(self) -> None: ...


class KernelClient:
    """Drives one kernel subprocess for one session.

    Wire format: one JSON object per line on stdin/stdout with fields
    kind (init|execute|reset|shutdown|result), session_id, cell_id, code,
    payload. Every request receives exactly one result message.
    """

    def __init__(
        self,
        command: list[str],
        session_id: str,
        workspace: str | Path,
        cell_timeout_s: float = 30.0,
    ):
        self.command = command
        self.session_id = session_id
        self.workspace = Path(workspace)
        self.cell_timeout_s = cell_timeout_s
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()
        self._artifacts: list[Artifact] = []

    def _ensure_proc(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self.command,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.DEVNULL,
                    text=True,
                    bufsize=1,
                )
            except OSError as exc:
                raise ExecutorUnavailable(f"cannot start kernel: {exc}") from exc
        return self._proc

    def _roundtrip(self, message: dict, timeout_s: float) -> dict:
        proc = self._ensure_proc()
        with self._lock:
            try:
                assert proc.stdin is not None and proc.stdout is not None
                proc.stdin.write(json.dumps(message) + "\n")
                proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ExecutorUnavailable(f"kernel pipe broken: {exc}") from exc
            deadline = time.monotonic() + timeout_s
            while True:
                if time.monotonic() > deadline:
                    proc.kill()
                    raise ExecutorUnavailable("kernel did not answer in time")
                line = proc.stdout.readline()
                if line == "":
                    raise ExecutorUnavailable("kernel exited unexpectedly")
                line = line.strip()
                if not line:
                    continue
                reply = json.loads(line)
                if reply.get("kind") != "result":
                    continue
                if reply.get("cell_id") != message.get("cell_id"):
                    continue
                return reply

    def init(self, snapshot_path: str | Path, plugin_manifest: list[dict]) -> None:
        reply = self._roundtrip(
            {
                "kind": "init",
                "session_id": self.session_id,
                "cell_id": None,
                "payload": {
                    "snapshot_path": str(snapshot_path),
                    "plugin_manifest": plugin_manifest,
                    "workspace": str(self.workspace),
                    "cell_timeout_s": self.cell_timeout_s,
                },
            },
            timeout_s=60.0,
        )
        payload = reply.get("payload", {})
        if not payload.get("ready"):
            error = payload.get("error", "kernel failed to initialize")
            if "snapshot" in error.lower():
                raise SnapshotMissing(error)
            raise PluginLoadError(error)

    def execute(self, cell_id: str, code: str) -> ExecutionResult:
        reply = self._roundtrip(
            {
                "kind": "execute",
                "session_id": self.session_id,
                "cell_id": cell_id,
                "code": code,
            },
            timeout_s=self.cell_timeout_s + 15.0,
        )
        result = ExecutionResult.from_dict(reply["payload"])
        self._artifacts.extend(result.artifacts)
        return result

    def reset(self) -> None:
        reply = self._roundtrip(
            {"kind": "reset", "session_id": self.session_id, "cell_id": None},
            timeout_s=30.0,
        )
        if not reply.get("payload", {}).get("ready"):
            raise ExecutorUnavailable("kernel reset failed")

    def list_artifacts(self) -> list[Artifact]:
        return list(self._artifacts)

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            try:
                assert self._proc.stdin is not None
                self._proc.stdin.write(
                    json.dumps(
                        {"kind": "shutdown", "session_id": self.session_id, "cell_id": None}
                    )
                    + "\n"
                )
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError):
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        self._proc = None
