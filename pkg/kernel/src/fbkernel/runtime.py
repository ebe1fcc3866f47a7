"""Cell execution with notebook semantics and artifact capture."""

from __future__ import annotations

import ast
import builtins
import contextlib
import io
import logging
import os
import sys
import traceback
from importlib import import_module
from pathlib import Path

from .sandbox import (
    GUARD,
    CellTimeout,
    SandboxViolation,
    guarded_import,
    start_wall_clock,
    stop_wall_clock,
)

_OUTPUT_CAP = 20_000

_IMAGE_EXT = {".png", ".jpg", ".jpeg", ".gif", ".svg"}
_TABLE_EXT = {".csv", ".tsv", ".parquet", ".json"}


def artifact_kind(path: str) -> str:
    suffix = Path(path).suffix.lower()
    if suffix in _IMAGE_EXT:
        return "image"
    if suffix in _TABLE_EXT:
        return "table"
    return "file"


class SessionRuntime:
    """Holds one session's interpreter state between cells."""

    def __init__(
        self,
        session_id: str,
        workspace: str,
        snapshot_path: str,
        plugin_manifest: list[dict],
        cell_timeout_s: float = 30.0,
        workspace_quota_mb: int = 256,
    ):
        self.session_id = session_id
        self.workspace = Path(workspace).resolve()
        # resolve before initialize() chdirs into the workspace
        self.snapshot_path = Path(snapshot_path).resolve()
        self.manifest = list(plugin_manifest)
        self.cell_timeout_s = cell_timeout_s
        self.workspace_quota_mb = workspace_quota_mb
        self.artifacts: list[dict] = []
        self.namespace: dict = {}

    def initialize(self) -> None:
        if not self.snapshot_path.exists():
            raise FileNotFoundError(f"data snapshot not found: {self.snapshot_path}")
        self.workspace.mkdir(parents=True, exist_ok=True)
        os.chdir(self.workspace)
        os.environ["MPLBACKEND"] = "Agg"
        os.environ.setdefault("MPLCONFIGDIR", str(self.workspace / ".mplconfig"))
        sys.dont_write_bytecode = True
        self._warm_matplotlib()
        self.namespace = self._build_namespace()

    @staticmethod
    def _warm_matplotlib() -> None:
        # the first pyplot import builds the font cache, which shells out to
        # fc-list; do it now while the sandbox guard is off so cells never
        # trip over it
        try:
            import matplotlib

            matplotlib.use("Agg")
            import matplotlib.pyplot  # noqa: F401
        except Exception:
            pass  # plotting stays optional

    def _build_namespace(self) -> dict:
        import pandas as pd

        if self.snapshot_path.suffix == ".jsonl":
            df = pd.read_json(self.snapshot_path, lines=True)
        else:
            df = pd.read_csv(self.snapshot_path)
        namespace: dict = {"df": df, "WORKSPACE": str(self.workspace)}
        for entry in self.manifest:
            name = entry["name"]
            try:
                module = import_module(entry.get("module", ""))
                namespace[name] = getattr(module, name)
            except Exception as exc:
                raise ImportError(f"plugin {name!r}: {exc}") from exc
        guarded = dict(vars(builtins))
        guarded["__import__"] = guarded_import
        namespace["__builtins__"] = guarded
        return namespace

    def reset(self) -> None:
        self.namespace = self._build_namespace()

    # --- execution ----------------------------------------------------------

    def execute(self, cell_id: str, code: str) -> dict:
        before = self._workspace_files()
        stdout = io.StringIO()
        stderr = io.StringIO()
        log_buffer = io.StringIO()
        handler = logging.StreamHandler(log_buffer)
        root_logger = logging.getLogger()
        root_logger.addHandler(handler)

        status = "ok"
        output = ""
        exception = None
        reason = ""
        GUARD.arm(self.workspace)
        start_wall_clock(self.cell_timeout_s)
        try:
            with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
                output = self._exec_cell(code)
        except CellTimeout:
            status = "timeout"
            reason = (
                f"timeout: cell exceeded the {self.cell_timeout_s:g} s wall-clock limit"
            )
        except SandboxViolation as exc:
            status = "violation"
            reason = f"violation: {exc}"
        except SyntaxError as exc:
            status = "error"
            exception = f"SyntaxError: {exc.msg} (line {exc.lineno})"
        except BaseException as exc:  # noqa: BLE001 - cells may raise anything
            status = "error"
            exception = f"{type(exc).__name__}: {exc}"
            stderr.write(traceback.format_exc(limit=4))
        finally:
            stop_wall_clock()
            GUARD.disarm()
            root_logger.removeHandler(handler)

        new_artifacts = self._harvest_artifacts(before, cell_id, status == "ok")
        if status == "ok" and self._quota_exceeded():
            status = "violation"
            reason = f"violation: workspace quota of {self.workspace_quota_mb} MB exceeded"
        logs = stdout.getvalue() + stderr.getvalue() + log_buffer.getvalue()
        if reason:
            logs = logs + ("\n" if logs and not logs.endswith("\n") else "") + reason
        self.artifacts.extend(new_artifacts)
        return {
            "status": status,
            "logs": logs[:_OUTPUT_CAP],
            "output": output[:_OUTPUT_CAP],
            "artifacts": new_artifacts,
            "exception": exception,
        }

    def _exec_cell(self, code: str) -> str:
        tree = ast.parse(code, mode="exec")
        last_expr = None
        if tree.body and isinstance(tree.body[-1], ast.Expr):
            last_expr = ast.Expression(tree.body.pop().value)
        if tree.body:
            exec(compile(tree, "<cell>", "exec"), self.namespace)
        if last_expr is not None:
            value = eval(compile(last_expr, "<cell>", "eval"), self.namespace)
            if value is not None:
                return repr(value)
        return ""

    # --- artifacts ------------------------------------------------------------

    def _workspace_files(self) -> set[str]:
        return {
            str(p.relative_to(self.workspace))
            for p in self.workspace.rglob("*")
            if p.is_file()
        }

    def _harvest_artifacts(self, before: set[str], cell_id: str, save_figures: bool):
        if save_figures and "matplotlib" in sys.modules:
            import matplotlib.pyplot as plt

            for num in plt.get_fignums():
                fig = plt.figure(num)
                fig.savefig(self.workspace / f"figure_{cell_id}_{num}.png")
            plt.close("all")
        after = self._workspace_files()
        return [
            {"kind": artifact_kind(rel), "path": rel, "url": "", "caption": ""}
            for rel in sorted(after - before)
            if not rel.startswith(".mplconfig")
        ]

    def _quota_exceeded(self) -> bool:
        total = sum(
            p.stat().st_size for p in self.workspace.rglob("*") if p.is_file()
        )
        return total > self.workspace_quota_mb * 1024 * 1024
