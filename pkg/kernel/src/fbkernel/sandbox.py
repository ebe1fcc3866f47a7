"""In-process enforcement: audit-hook guard, import denylist, wall clock.

The audit hook is installed once per process and consults a mutable guard
state, because CPython offers no way to remove a hook. It is armed only
while a cell runs, so the kernel's own file handling (snapshot loading,
figure harvesting, wire I/O) stays unrestricted.
"""

from __future__ import annotations

import builtins
import os
import signal
import sys
from pathlib import Path


class SandboxViolation(Exception):
    pass


class CellTimeout(BaseException):
    """Derives from BaseException so a cell's `except Exception` cannot
    swallow the wall-clock interrupt."""


DENIED_IMPORTS = {
    "socket",
    "ssl",
    "urllib",
    "requests",
    "httpx",
    "http",
    "ftplib",
    "telnetlib",
    "smtplib",
    "subprocess",
    "multiprocessing",
    "ctypes",
    "pty",
}

_DENIED_EVENT_PREFIXES = (
    "socket.",
    "subprocess.",
)

_DENIED_EVENTS = {
    "socket.__new__",
    "os.system",
    "os.posix_spawn",
    "os.spawn",
    "os.exec",
    "pty.spawn",
}

_WRITE_EVENTS_WITH_PATH = {
    "os.remove": 0,
    "os.rename": 0,
    "os.rmdir": 0,
    "shutil.rmtree": 0,
}


class Guard:
    """Process-wide sandbox switch consulted by the audit hook."""

    def __init__(self) -> None:
        self.active = False
        self.workspace = ""

    def arm(self, workspace: str | Path) -> None:
        self.workspace = str(Path(workspace).resolve())
        self.active = True

    def disarm(self) -> None:
        self.active = False

    def path_allowed(self, raw: object) -> bool:
        try:
            path = Path(os.fsdecode(raw))  # type: ignore[arg-type]
        except TypeError:
            return True  # file descriptors etc.
        if not path.is_absolute():
            path = Path.cwd() / path
        resolved = str(path.resolve())
        return resolved == self.workspace or resolved.startswith(
            self.workspace + os.sep
        )


GUARD = Guard()

_WRITE_FLAGS = os.O_WRONLY | os.O_RDWR | os.O_APPEND | os.O_CREAT | os.O_TRUNC


def _audit(event: str, args: tuple) -> None:
    if not GUARD.active:
        return
    if event in _DENIED_EVENTS or event.startswith(_DENIED_EVENT_PREFIXES):
        raise SandboxViolation(f"denied operation: {event}")
    if event == "open":
        path, mode, flags = args
        writing = False
        if isinstance(mode, str):
            writing = any(f in mode for f in ("w", "a", "x", "+"))
        elif mode is None and isinstance(flags, int):
            writing = bool(flags & _WRITE_FLAGS)
        if writing and not GUARD.path_allowed(path):
            raise SandboxViolation(f"write outside the session workspace: {path!r}")
    elif event in _WRITE_EVENTS_WITH_PATH:
        path = args[_WRITE_EVENTS_WITH_PATH[event]]
        if not GUARD.path_allowed(path):
            raise SandboxViolation(f"{event} outside the session workspace: {path!r}")


def install_audit_hook() -> None:
    sys.addaudithook(_audit)


def guarded_import(name, globals=None, locals=None, fromlist=(), level=0):
    root = name.split(".")[0]
    if GUARD.active and root in DENIED_IMPORTS:
        raise SandboxViolation(f"import of {root!r} is not allowed in cells")
    return builtins.__import__(name, globals, locals, fromlist, level)


def _alarm_handler(signum, frame):
    raise CellTimeout()


def install_alarm_handler() -> None:
    signal.signal(signal.SIGALRM, _alarm_handler)


def start_wall_clock(seconds: float) -> None:
    # repeating interval so a cell swallowing the first CellTimeout in a
    # bare except still gets interrupted again
    signal.setitimer(signal.ITIMER_REAL, seconds, 5.0)


def stop_wall_clock() -> None:
    signal.setitimer(signal.ITIMER_REAL, 0.0)
