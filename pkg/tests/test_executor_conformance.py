"""Protocol conformance suite for executors.

Runs against the in-process stub always, and against the external kernel
when the fbkernel package is installed. The two must be indistinguishable
from the planner's side.
"""

from __future__ import annotations

import csv
import importlib.util
import sys
import uuid
from pathlib import Path

import pytest

from feedbacklens.agent import KernelClient, StubExecutor
from feedbacklens.agent.plugins import builtin_registry
from feedbacklens.errors import PluginLoadError, SnapshotMissing

HAS_KERNEL = importlib.util.find_spec("fbkernel") is not None

FLAVORS = ["stub"] + (["kernel"] if HAS_KERNEL else [])


def write_snapshot(path: Path, rows: int = 100) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "text", "timestamp", "topics"])
        for i in range(rows):
            writer.writerow(
                [f"r{i:03d}", f"feedback number {i}", f"2024-04-{i % 28 + 1:02d}T00:00:00+00:00", "bug"]
            )
    return path


@pytest.fixture(params=FLAVORS)
def executor_setup(request, tmp_path):
    flavor = request.param
    workspace = tmp_path / "workspace"
    workspace.mkdir()
    snapshot = write_snapshot(tmp_path / "snapshot.csv")
    session_id = uuid.uuid4().hex[:8]

    def factory(cell_timeout_s: float = 10.0):
        if flavor == "stub":
            return StubExecutor(session_id, workspace, cell_timeout_s=cell_timeout_s)
        return KernelClient(
            [sys.executable, "-m", "fbkernel"],
            session_id,
            workspace,
            cell_timeout_s=cell_timeout_s,
        )

    manifest = builtin_registry(flavor).manifest()
    created = []

    def make(cell_timeout_s: float = 10.0, init: bool = True):
        ex = factory(cell_timeout_s)
        created.append(ex)
        if init:
            ex.init(snapshot, manifest)
        return ex

    yield make, snapshot, workspace, flavor
    for ex in created:
        ex.close()


def test_init_loads_snapshot_as_df(executor_setup):
    make, *_ = executor_setup
    ex = make()
    result = ex.execute("c1", "len(df)")
    assert result.status == "ok"
    assert result.output == "100"


def test_missing_snapshot(executor_setup):
    make, snapshot, workspace, flavor = executor_setup
    ex = make(init=False)
    with pytest.raises(SnapshotMissing):
        ex.init(snapshot.parent / "nope.csv", [])


def test_bad_plugin_module(executor_setup):
    make, snapshot, workspace, flavor = executor_setup
    ex = make(init=False)
    with pytest.raises(PluginLoadError) as exc:
        ex.init(snapshot, [{"name": "ghost", "module": "no.such.module"}])
    assert "ghost" in str(exc.value)


def test_state_persists_across_cells(executor_setup):
    make, *_ = executor_setup
    ex = make()
    assert ex.execute("c1", "x = 1").status == "ok"
    result = ex.execute("c2", "x + 1")
    assert result.status == "ok"
    assert result.output == "2"


def test_stdout_captured_in_logs(executor_setup):
    make, *_ = executor_setup
    ex = make()
    result = ex.execute("c1", "print('hello')")
    assert result.status == "ok"
    assert "hello" in result.logs


def test_logging_captured_in_logs(executor_setup):
    make, *_ = executor_setup
    ex = make()
    result = ex.execute(
        "c1", "import logging\nlogging.getLogger('plugin').warning('beep %d', 7)"
    )
    assert "beep 7" in result.logs


def test_statement_only_cell_has_empty_output(executor_setup):
    make, *_ = executor_setup
    ex = make()
    result = ex.execute("c1", "y = 5")
    assert result.status == "ok"
    assert result.output == ""


def test_new_file_reported_as_artifact(executor_setup):
    make, snapshot, workspace, flavor = executor_setup
    ex = make()
    result = ex.execute(
        "c1", "df.head(3).to_csv('top3.csv', index=False)\n'saved'"
    )
    assert result.status == "ok"
    assert [a.path for a in result.artifacts] == ["top3.csv"]
    assert result.artifacts[0].kind == "table"
    assert (workspace / "top3.csv").exists()


def test_matplotlib_figure_becomes_image_artifact(executor_setup):
    make, *_ = executor_setup
    ex = make()
    code = (
        "import matplotlib\nmatplotlib.use('Agg')\n"
        "import matplotlib.pyplot as plt\n"
        "plt.plot([1, 2, 3])\n"
    )
    result = ex.execute("c1", code)
    assert result.status == "ok"
    kinds = {a.kind for a in result.artifacts}
    assert kinds == {"image"}


def test_exception_surfaces_as_error(executor_setup):
    make, *_ = executor_setup
    ex = make()
    result = ex.execute("c1", "1/0")
    assert result.status == "error"
    assert result.exception == "ZeroDivisionError: division by zero"


def test_socket_import_is_violation(executor_setup):
    make, *_ = executor_setup
    ex = make()
    result = ex.execute("c1", "import socket\nsocket.socket()")
    assert result.status == "violation"
    assert result.exception is None
    assert "violation" in result.logs


def test_write_outside_workspace_is_violation(executor_setup):
    make, snapshot, workspace, flavor = executor_setup
    ex = make()
    outside = workspace.parent / "escape.txt"
    result = ex.execute("c1", f"open({str(outside)!r}, 'w').write('x')")
    assert result.status == "violation"
    assert not outside.exists()


def test_reset_clears_state_keeps_artifacts(executor_setup):
    make, snapshot, workspace, flavor = executor_setup
    ex = make()
    ex.execute("c1", "x = 41")
    ex.execute("c2", "open('keep.txt', 'w').write('kept')")
    ex.reset()
    result = ex.execute("c3", "x")
    assert result.status == "error"
    assert "NameError" in (result.exception or "")
    assert (workspace / "keep.txt").exists()
    assert "keep.txt" in [a.path for a in ex.list_artifacts()]
    # df is reloaded as part of the initialized state
    assert ex.execute("c4", "len(df)").output == "100"


def test_timeout_enforced(executor_setup):
    make, *_ = executor_setup
    ex = make(cell_timeout_s=1.5)
    result = ex.execute("c1", "import time\ntime.sleep(10)")
    assert result.status == "timeout"
    assert result.exception is None
    # executor stays usable afterwards
    after = ex.execute("c2", "1 + 1")
    assert after.status == "ok"
    assert after.output == "2"


def test_plugin_callable_from_cell(executor_setup):
    make, snapshot, workspace, flavor = executor_setup
    ex = make()
    result = ex.execute("c1", "issue_river(df, top_n=3)")
    assert result.status == "ok", result.failure_text()
    paths = [a.path for a in result.artifacts]
    assert "issue_river.png" in paths
    assert any(a.kind == "image" for a in result.artifacts)
