"""Wire loop: JSON lines in on stdin, one result line out per request.

The kernel binds to the first init's session id; requests for any other
session get an error result. User code never sees the real stdout, so the
wire stays clean.
"""

from __future__ import annotations

import json
import sys

from .runtime import SessionRuntime
from .sandbox import install_alarm_handler, install_audit_hook


def result(session_id, cell_id, payload) -> dict:
    return {
        "kind": "result",
        "session_id": session_id,
        "cell_id": cell_id,
        "payload": payload,
    }


def main() -> int:
    install_audit_hook()
    install_alarm_handler()
    wire_out = sys.stdout
    runtime: SessionRuntime | None = None

    for raw in sys.stdin:
        raw = raw.strip()
        if not raw:
            continue
        try:
            message = json.loads(raw)
        except json.JSONDecodeError as exc:
            print(
                json.dumps(result(None, None, {"ready": False, "error": f"bad message: {exc.msg}"})),
                file=wire_out,
                flush=True,
            )
            continue
        kind = message.get("kind")
        session_id = message.get("session_id")
        cell_id = message.get("cell_id")

        if kind == "init":
            payload = message.get("payload", {})
            try:
                runtime = SessionRuntime(
                    session_id=session_id,
                    workspace=payload["workspace"],
                    snapshot_path=payload["snapshot_path"],
                    plugin_manifest=payload.get("plugin_manifest", []),
                    cell_timeout_s=float(payload.get("cell_timeout_s", 30.0)),
                    workspace_quota_mb=int(payload.get("workspace_quota_mb", 256)),
                )
                runtime.initialize()
                reply = {"ready": True}
            except FileNotFoundError as exc:
                runtime = None
                reply = {"ready": False, "error": f"snapshot missing: {exc}"}
            except Exception as exc:  # noqa: BLE001 - reported, never fatal
                runtime = None
                reply = {"ready": False, "error": str(exc)}
            print(json.dumps(result(session_id, cell_id, reply)), file=wire_out, flush=True)
            continue

        if runtime is None or session_id != runtime.session_id:
            print(
                json.dumps(
                    result(
                        session_id,
                        cell_id,
                        {"ready": False, "error": f"unknown session {session_id!r}"},
                    )
                ),
                file=wire_out,
                flush=True,
            )
            continue

        if kind == "execute":
            payload = runtime.execute(cell_id, message.get("code", ""))
            print(json.dumps(result(session_id, cell_id, payload)), file=wire_out, flush=True)
        elif kind == "reset":
            try:
                runtime.reset()
                reply = {"ready": True}
            except Exception as exc:  # noqa: BLE001
                reply = {"ready": False, "error": str(exc)}
            print(json.dumps(result(session_id, cell_id, reply)), file=wire_out, flush=True)
        elif kind == "shutdown":
            print(
                json.dumps(result(session_id, cell_id, {"ready": False, "closed": True})),
                file=wire_out,
                flush=True,
            )
            return 0
        else:
            print(
                json.dumps(
                    result(session_id, cell_id, {"ready": False, "error": f"unknown kind {kind!r}"})
                ),
                file=wire_out,
                flush=True,
            )
    return 0


if __name__ == "__main__":
    sys.exit(main())
