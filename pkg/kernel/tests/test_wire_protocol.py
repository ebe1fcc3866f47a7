from __future__ import annotations

import json
from pathlib import Path

from conftest import Wire, write_snapshot


def test_every_execute_gets_exactly_one_matching_result(wire):
    w, workspace, _ = wire
    for i in range(5):
        reply = w.send("execute", cell_id=f"c{i}", code=f"{i} * 2")
        assert reply["kind"] == "result"
        assert reply["cell_id"] == f"c{i}"
        assert reply["payload"]["output"] == repr(i * 2)


def test_results_arrive_in_execute_order(wire):
    w, *_ = wire
    outputs = [w.execute(f"c{i}", f"x{i} = {i}\nx{i}")["output"] for i in range(4)]
    assert outputs == ["0", "1", "2", "3"]


def test_cells_observe_prior_state(wire):
    w, *_ = wire
    w.execute("c1", "acc = []")
    w.execute("c2", "acc.append('one')")
    result = w.execute("c3", "acc")
    assert result["output"] == "['one']"


def test_unknown_session_is_error_result(wire):
    w, *_ = wire
    reply = w.send("execute", cell_id="cx", session_id="ghost", code="1")
    assert reply["payload"].get("ready") is False
    assert "unknown session" in reply["payload"]["error"]


def test_reset_unknown_session_is_error(wire):
    w, *_ = wire
    reply = w.send("reset", session_id="ghost")
    assert reply["payload"]["ready"] is False


def test_reset_clears_state_keeps_workspace(wire):
    w, workspace, _ = wire
    w.execute("c1", "marker = 7")
    w.execute("c2", "open('kept.txt', 'w').write('y')")
    assert w.send("reset")["payload"]["ready"] is True
    result = w.execute("c3", "marker")
    assert result["status"] == "error"
    assert "NameError" in result["exception"]
    assert (workspace / "kept.txt").exists()


def test_malformed_json_line_is_answered_not_fatal(wire):
    w, *_ = wire
    assert w.proc.stdin is not None and w.proc.stdout is not None
    w.proc.stdin.write("this is not json\n")
    w.proc.stdin.flush()
    reply = json.loads(w.proc.stdout.readline())
    assert reply["payload"]["ready"] is False
    assert w.execute("c9", "1 + 1")["output"] == "2"


def test_init_missing_snapshot_reports_not_ready(tmp_path):
    w = Wire()
    try:
        reply = w.init(tmp_path / "nope.csv", tmp_path / "ws")
        assert reply["payload"]["ready"] is False
        assert "snapshot" in reply["payload"]["error"].lower()
    finally:
        w.close()


def test_shutdown_exits_cleanly(tmp_path):
    w = Wire()
    write_snapshot(tmp_path / "s.csv")
    (tmp_path / "ws").mkdir()
    w.init(tmp_path / "s.csv", tmp_path / "ws")
    w.send("shutdown")
    w.proc.wait(timeout=5)
    assert w.proc.returncode == 0
