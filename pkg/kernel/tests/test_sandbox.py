from __future__ import annotations

import time

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from conftest import Wire, write_snapshot


def test_socket_use_is_violation_not_crash(wire):
    w, *_ = wire
    result = w.execute("c1", "import socket\nsocket.socket().connect(('1.2.3.4', 80))")
    assert result["status"] == "violation"
    assert result["exception"] is None
    assert w.alive()


def test_urllib_fetch_is_violation(wire):
    w, *_ = wire
    result = w.execute("c1", "import urllib.request\nurllib.request.urlopen('http://example.com')")
    assert result["status"] == "violation"
    assert w.alive()


def test_write_outside_workspace_is_violation(wire):
    w, workspace, _ = wire
    outside = workspace.parent / "escape.txt"
    result = w.execute("c1", f"open({str(outside)!r}, 'w').write('x')")
    assert result["status"] == "violation"
    assert not outside.exists()


def test_low_level_os_write_outside_workspace_is_violation(wire):
    w, workspace, _ = wire
    outside = workspace.parent / "escape2.txt"
    code = f"import os\nfd = os.open({str(outside)!r}, os.O_WRONLY | os.O_CREAT)"
    result = w.execute("c1", code)
    assert result["status"] == "violation"
    assert not outside.exists()


def test_subprocess_spawn_is_violation(wire):
    w, *_ = wire
    result = w.execute("c1", "import subprocess")
    assert result["status"] == "violation"
    result = w.execute("c2", "import os\nos.system('echo pwned')")
    assert result["status"] == "violation"


def test_delete_outside_workspace_is_violation(wire, tmp_path):
    w, workspace, snapshot = wire
    victim = tmp_path / "victim.txt"
    victim.write_text("precious")
    result = w.execute("c1", f"import os\nos.remove({str(victim)!r})")
    assert result["status"] == "violation"
    assert victim.exists()


def test_writes_inside_workspace_are_fine(wire):
    w, workspace, _ = wire
    result = w.execute("c1", "open('fine.txt', 'w').write('ok')\n'done'")
    assert result["status"] == "ok"
    assert (workspace / "fine.txt").exists()


ADVERSARIAL_SNIPPETS = [
    "import socket",
    "import socket as s\ns.create_connection(('10.0.0.1', 9))",
    "open('/etc/hostile', 'w')",
    "open('../break_out.txt', 'a')",
    "import os\nos.system('true')",
    "import subprocess\nsubprocess.run(['true'])",
    "import urllib.request",
    "import ctypes",
    "while False: pass",
    "print('benign')",
    "1 / 0",
    "raise SystemExit(3)",
    "import os\nos.rename('../x', '../y')",
    "x = bytearray(10**6)",
    "def f(): return f()\nf()",
]


@settings(
    max_examples=15,
    deadline=None,
    suppress_health_check=[HealthCheck.function_scoped_fixture],
)
@given(st.lists(st.sampled_from(ADVERSARIAL_SNIPPETS), min_size=1, max_size=4))
def test_adversarial_cells_never_crash_the_kernel(tmp_path_factory, snippets):
    tmp_path = tmp_path_factory.mktemp("adv")
    workspace = tmp_path / "ws"
    workspace.mkdir()
    snapshot = write_snapshot(tmp_path / "snap.csv", rows=3)
    w = Wire()
    try:
        assert w.init(snapshot, workspace, cell_timeout_s=5.0)["payload"]["ready"]
        for i, code in enumerate(snippets):
            result = w.execute(f"c{i}", code)
            assert result["status"] in ("ok", "error", "violation", "timeout")
            assert w.alive()
        # still fully functional afterwards
        assert w.execute("cz", "len(df)")["output"] == "3"
    finally:
        w.close()


def test_timeout_interrupts_and_recovers(wire):
    w, *_ = wire  # fixture sets an 8 s limit
    started = time.monotonic()
    result = w.execute("c1", "import time\ntime.sleep(60)")
    elapsed = time.monotonic() - started
    assert result["status"] == "timeout"
    assert 6.0 < elapsed < 12.0
    assert w.execute("c2", "2 + 2")["output"] == "4"


def test_timeout_pierces_except_exception(wire):
    w, *_ = wire
    code = (
        "import time\n"
        "while True:\n"
        "    try:\n"
        "        time.sleep(1)\n"
        "    except Exception:\n"
        "        pass\n"
    )
    result = w.execute("c1", code)
    # the interrupt derives from BaseException, so except Exception cannot
    # swallow it
    assert result["status"] == "timeout"
    assert w.alive()
