"""In-process, protocol-conformant executor.

Runs cells in the host interpreter with the same observable behavior as
the external kernel: stateful namespace per session, stdout/stderr and
logging captured into logs, last-expression value as output, new files
under the workspace reported as artifacts, denied imports and writes
outside the workspace reported as violations.

Isolation here is best-effort (guarded builtins in the cell namespace and
a wall-clock watchdog); the external kernel adds OS-level enforcement.
Cell execution chdirs into the workspace under a process-wide lock so
relative paths behave like they do in a notebook.
"""

from __future__ import annotations

import ast
import builtins
import contextlib
import io
import logging
import os
import sys
import threading
import traceback
from importlib import import_module
from pathlib import Path

from ..errors import PluginLoadError, SnapshotMissing
from .executor import Artifact, ExecutionResult, artifact_kind_for

_EXEC_LOCK = threading.Lock()

_DENIED_IMPORTS = {
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

_OUTPUT_CAP = 20_000


class SandboxViolation(Exception):
    pass


class StubExecutor:
    def __init__(
        self,
        session_id: str,
        workspace: str | Path,
        cell_timeout_s: float = 30.0,
        workspace_quota_mb: int = 256,
    ):
        self.session_id = session_id
        self.workspace = Path(workspace).resolve()
        self.cell_timeout_s = cell_timeout_s
        self.workspace_quota_mb = workspace_quota_mb
        self._namespace: dict | None = None
        self._snapshot_path: Path | None = None
        self._manifest: list[dict] = []
        self._artifacts: list[Artifact] = []
        os.environ.setdefault("MPLBACKEND", "Agg")

    # --- lifecycle -----------------------------------------------------------

    def init(self, snapshot_path: str | Path, plugin_manifest: list[dict]) -> None:
        snapshot = Path(snapshot_path)
        if not snapshot.exists():
            raise SnapshotMissing(f"data snapshot not found: {snapshot}")
        self.workspace.mkdir(parents=True, exist_ok=True)
        self._snapshot_path = snapshot
        self._manifest = list(plugin_manifest)
        self._namespace = self._build_namespace()

    def _build_namespace(self) -> dict:
        import pandas as pd

        assert self._snapshot_path is not None
        if self._snapshot_path.suffix == ".jsonl":
            df = pd.read_json(self._snapshot_path, lines=True)
        else:
            df = pd.read_csv(self._snapshot_path)
        namespace: dict = {"df": df, "WORKSPACE": str(self.workspace)}
        for entry in self._manifest:
            name = entry["name"]
            module_path = entry.get("module", "")
            try:
                module = import_module(module_path)
                namespace[name] = getattr(module, name)
            except Exception as exc:
                raise PluginLoadError(f"plugin {name!r}: {exc}") from exc
        guarded = dict(vars(builtins))
        guarded["__import__"] = self._guarded_import
        guarded["open"] = self._guarded_open
        namespace["__builtins__"] = guarded
        return namespace

    def reset(self) -> None:
        if self._namespace is None:
            raise RuntimeError("executor not initialized")
        self._namespace = self._build_namespace()

    def list_artifacts(self) -> list[Artifact]:
        return list(self._artifacts)

    def close(self) -> None:
        self._namespace = None

    # --- guards ---------------------------------------------------------------

    def _guarded_import(self, name, globals=None, locals=None, fromlist=(), level=0):
        root = name.split(".")[0]
        if root in _DENIED_IMPORTS:
            raise SandboxViolation(f"import of {root!r} is not allowed in cells")
        return builtins.__import__(name, globals, locals, fromlist, level)

    def _guarded_open(self, file, mode="r", *args, **kwargs):
        if any(flag in mode for flag in ("w", "a", "x", "+")):
            target = Path(file)
            if not target.is_absolute():
                target = Path.cwd() / target
            target = target.resolve()
            if not str(target).startswith(str(self.workspace) + os.sep) and target != self.workspace:
                raise SandboxViolation(
                    f"write outside the session workspace: {target}"
                )
        return builtins.open(file, mode, *args, **kwargs)

    # --- execution --------------------------------------------------------------

    def execute(self, cell_id: str, code: str) -> ExecutionResult:
        if self._namespace is None:
            return ExecutionResult(
                status="error",
                exception="RuntimeError: executor not initialized",
            )
        with _EXEC_LOCK:
            before = self._workspace_files()
            prev_cwd = os.getcwd()
            os.chdir(self.workspace)
            try:
                status, logs, output, exception = self._run_guarded(code)
            finally:
                os.chdir(prev_cwd)
            new_artifacts = self._harvest_artifacts(before, cell_id, status == "ok")
        if status == "ok" and self._quota_exceeded():
            status = "violation"
            logs += f"\nviolation: workspace quota of {self.workspace_quota_mb} MB exceeded"
        result = ExecutionResult(
            status=status,
            logs=logs[:_OUTPUT_CAP],
            output=output[:_OUTPUT_CAP],
            artifacts=new_artifacts,
            exception=exception,
        )
        self._artifacts.extend(new_artifacts)
        return result

    def _run_guarded(self, code: str):
        stdout = io.StringIO()
        stderr = io.StringIO()
        log_buffer = io.StringIO()
        handler = logging.StreamHandler(log_buffer)
        handler.setLevel(logging.DEBUG)
        root_logger = logging.getLogger()
        root_logger.addHandler(handler)
        outcome: dict = {}

        def run() -> None:
            try:
                with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
                    output = self._exec_cell(code)
                outcome["status"] = "ok"
                outcome["output"] = output
            except SandboxViolation as exc:
                outcome["status"] = "violation"
                outcome["reason"] = f"violation: {exc}"
            except SyntaxError as exc:
                outcome["status"] = "error"
                outcome["exception"] = f"SyntaxError: {exc.msg} (line {exc.lineno})"
            except BaseException as exc:  # noqa: BLE001 - cells may raise anything
                outcome["status"] = "error"
                outcome["exception"] = f"{type(exc).__name__}: {exc}"
                tb = traceback.format_exc(limit=4)
                stderr.write(tb)

        thread = threading.Thread(target=run, daemon=True)
        thread.start()
        thread.join(self.cell_timeout_s)
        reason = ""
        try:
            if thread.is_alive():
                status = "timeout"
                exception = None
                output = ""
                reason = f"timeout: cell exceeded the {self.cell_timeout_s:g} s wall-clock limit"
            else:
                status = outcome.get("status", "error")
                exception = outcome.get("exception")
                output = outcome.get("output", "")
                reason = outcome.get("reason", "")
        finally:
            root_logger.removeHandler(handler)
        logs = stdout.getvalue() + stderr.getvalue() + log_buffer.getvalue()
        if reason:
            logs = logs + ("\n" if logs and not logs.endswith("\n") else "") + reason
        return status, logs, output, exception

    def _exec_cell(self, code: str) -> str:
        """Jupyter-style semantics: run all statements, and if the last one
        is a bare expression, its repr becomes the cell output."""
        assert self._namespace is not None
        tree = ast.parse(code, mode="exec")
        last_expr: ast.Expression | None = None
        if tree.body and isinstance(tree.body[-1], ast.Expr):
            last_expr = ast.Expression(tree.body.pop().value)
        if tree.body:
            exec(compile(tree, "<cell>", "exec"), self._namespace)
        if last_expr is not None:
            value = eval(compile(last_expr, "<cell>", "eval"), self._namespace)
            if value is not None:
                return repr(value)
        return ""

    # --- artifacts ---------------------------------------------------------------

    def _workspace_files(self) -> set[str]:
        if not self.workspace.exists():
            return set()
        return {
            str(p.relative_to(self.workspace))
            for p in self.workspace.rglob("*")
            if p.is_file()
        }

    def _harvest_artifacts(
        self, before: set[str], cell_id: str, save_figures: bool
    ) -> list[Artifact]:
        if save_figures and "matplotlib" in sys.modules:
            import matplotlib.pyplot as plt

            for num in plt.get_fignums():
                fig = plt.figure(num)
                fig.savefig(self.workspace / f"figure_{cell_id}_{num}.png")
            plt.close("all")
        after = self._workspace_files()
        return [
            Artifact(kind=artifact_kind_for(rel), path=rel)
            for rel in sorted(after - before)
        ]

    def _quota_exceeded(self) -> bool:
        total = sum(
            p.stat().st_size for p in self.workspace.rglob("*") if p.is_file()
        )
        return total > self.workspace_quota_mb * 1024 * 1024
