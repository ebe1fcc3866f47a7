"""Generates executable cells from planner queries and repairs failures.

Generation is few-shot with worked examples that reason before writing
code, plus the plugin catalog. Every cell passes a static check first
(denylisted tokens, syntax) and a failed execution feeds the verbatim
failure text back into a re-generation prompt, at most three attempts per
query overall.
"""

from __future__ import annotations

import re
import tokenize as tokenize_mod
from dataclasses import dataclass, field
from io import StringIO

from ..errors import AttemptsExhausted, NoCodeBlock
from ..gateway import Gateway
from .plugins import PluginDescriptor, catalog_prompt
from .templates import load_template

MAX_ATTEMPTS = 3

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_+-]*[ \t]*\r?\n(.*?)```", re.S)

# Tokens that must never reach the executor, by violation category.
_DENYLIST: dict[str, str] = {
    "socket": "NetworkAccess",
    "ssl": "NetworkAccess",
    "urllib": "NetworkAccess",
    "urllib3": "NetworkAccess",
    "requests": "NetworkAccess",
    "httpx": "NetworkAccess",
    "aiohttp": "NetworkAccess",
    "ftplib": "NetworkAccess",
    "telnetlib": "NetworkAccess",
    "smtplib": "NetworkAccess",
    "subprocess": "ProcessSpawn",
    "multiprocessing": "ProcessSpawn",
    "pty": "ProcessSpawn",
    "ctypes": "ProcessSpawn",
    "shutil": "FilesystemEscape",
}

_OS_DENIED_ATTRS = {"system", "popen", "execv", "execve", "spawnl", "remove", "rmdir"}


@dataclass
class CGQuery:
    id: str
    task_description: str
    context: str = ""
    data_handle: str = "df"
    constraints: str = ""


@dataclass
class CodeCell:
    source: str
    attempt: int = 1
    query_id: str = ""
    fingerprint: str = ""

    def __post_init__(self) -> None:
        if not 1 <= self.attempt <= MAX_ATTEMPTS:
            raise ValueError(f"attempt {self.attempt} outside 1..{MAX_ATTEMPTS}")


def extract_code(completion: str) -> str:
    """All fenced code blocks, concatenated in order; models often split
    imports from logic across fences."""
    blocks = _FENCE_RE.findall(completion)
    if not blocks:
        raise NoCodeBlock("completion contains no fenced code block")
    return "\n".join(block.rstrip("\n") for block in blocks).strip("\n")


def scan_denylist(source: str) -> list[str]:
    violations: list[str] = []
    try:
        tokens = list(tokenize_mod.generate_tokens(StringIO(source).readline))
    except (tokenize_mod.TokenError, IndentationError, SyntaxError):
        return []  # the syntax check reports these
    for tok in tokens:
        if tok.type != tokenize_mod.NAME:
            continue
        category = _DENYLIST.get(tok.string)
        if category:
            violations.append(f"{category}: {tok.string}")
    # os.system and friends: look for the NAME OP NAME triple
    for i, tok in enumerate(tokens[:-2]):
        if (
            tok.type == tokenize_mod.NAME
            and tok.string == "os"
            and tokens[i + 1].string == "."
            and tokens[i + 2].string in _OS_DENIED_ATTRS
        ):
            violations.append(f"ProcessSpawn: os.{tokens[i + 2].string}")
    return sorted(set(violations))


@dataclass
class CodeGenerator:
    gateway: Gateway
    catalog: list[PluginDescriptor] = field(default_factory=list)

    def _generation_prompt(self, query: CGQuery) -> str:
        return load_template("codegen").substitute(
            catalog=catalog_prompt(self.catalog),
            data_handle=query.data_handle,
            context=query.context or "none",
            constraints=query.constraints or "none",
            task=query.task_description,
        )

    def generate(self, query: CGQuery) -> CodeCell:
        """First attempt for a query; one re-ask if the completion carries
        no code fence, then the failure propagates to the planner."""
        prompt = self._generation_prompt(query)
        completion = self.gateway.chat([("user", prompt)])
        try:
            source = extract_code(completion)
        except NoCodeBlock:
            retry = self.gateway.chat(
                [
                    ("user", prompt),
                    ("assistant", completion),
                    ("user", "Reply with exactly one fenced ```python code block."),
                ]
            )
            source = extract_code(retry)
        return CodeCell(
            source=source,
            attempt=1,
            query_id=query.id,
            fingerprint=self.gateway.last_fingerprint,
        )

    def verify(self, cell: CodeCell) -> list[str]:
        """Static checks only: denylist scan plus a dry parse. Violations
        are data for the repair loop, not exceptions."""
        violations = scan_denylist(cell.source)
        try:
            compile(cell.source, "<cell>", "exec")
        except SyntaxError as exc:
            violations.append(f"SyntaxError: {exc.msg} (line {exc.lineno})")
        return violations

    def repair(self, cell: CodeCell, failure: str, query: CGQuery) -> CodeCell:
        """Re-generate with the prior source and the verbatim failure text.
        The third failed attempt raises AttemptsExhausted so the planner is
        notified instead of looping."""
        if cell.attempt >= MAX_ATTEMPTS:
            raise AttemptsExhausted(
                f"query {query.id}: {MAX_ATTEMPTS} attempts failed; last failure: {failure}"
            )
        prompt = load_template("repair").substitute(
            task=query.task_description,
            data_handle=query.data_handle,
            catalog=catalog_prompt(self.catalog),
            source=cell.source,
            failure=failure,
        )
        completion = self.gateway.chat([("user", prompt)])
        source = extract_code(completion)
        return CodeCell(
            source=source,
            attempt=cell.attempt + 1,
            query_id=query.id,
            fingerprint=self.gateway.last_fingerprint,
        )
