"""Session-scoped task planning.

The planner turns an analyst question into an ordered list of sub-tasks
(a fenced JSON block in the completion), optionally fuses adjacent
dependent steps, judges intermediate results, and produces the final
multi-modal response. All loops the planner participates in are bounded:
plan parsing gets one re-ask, replanning is capped by max_replans.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from ..errors import DependencyUnmet, PlanParseError
from ..gateway import Gateway
from .codegen import CGQuery
from .executor import Artifact, ExecutionResult
from .templates import load_template

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_+-]*[ \t]*\r?\n(.*?)```", re.S)


@dataclass
class SubTask:
    description: str
    depends_on: list[int] = field(default_factory=list)
    mergeable: bool = False
    status: str = "pending"  # pending | dispatched | done | failed
    result: ExecutionResult | None = None


@dataclass
class Plan:
    steps: list[SubTask]
    revision: int = 0

    def pending(self) -> list[int]:
        return [i for i, s in enumerate(self.steps) if s.status == "pending"]

    def failed(self) -> list[int]:
        return [i for i, s in enumerate(self.steps) if s.status == "failed"]


@dataclass
class AgentResponse:
    text: str
    status: str  # answered | clarification_needed | failed
    artifacts: list[Artifact] = field(default_factory=list)
    code_shown: str | None = None

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "status": self.status,
            "artifacts": [a.to_dict() for a in self.artifacts],
            "code_shown": self.code_shown,
        }


@dataclass
class Verdict:
    action: str  # finish | continue | replan | clarify
    detail: str = ""
    explicit: bool = True  # False when no keyword was recognized


def parse_plan(completion: str) -> Plan:
    """Validate the fenced JSON step list against the sub-task schema."""
    blocks = _FENCE_RE.findall(completion)
    payload = None
    candidates = blocks if blocks else [completion]
    for candidate in candidates:
        try:
            payload = json.loads(candidate)
            break
        except json.JSONDecodeError:
            continue
    if payload is None:
        raise PlanParseError("no parseable json block in the plan completion")
    if not isinstance(payload, list) or not payload:
        raise PlanParseError("plan must be a non-empty list of steps")
    steps: list[SubTask] = []
    for i, raw in enumerate(payload):
        if not isinstance(raw, dict):
            raise PlanParseError(f"step {i} is not an object")
        description = str(raw.get("description", "")).strip()
        if not description:
            raise PlanParseError(f"step {i} has no description")
        depends_on = raw.get("depends_on", [])
        if not isinstance(depends_on, list) or any(
            not isinstance(d, int) or d < 0 or d >= i for d in depends_on
        ):
            raise PlanParseError(
                f"step {i} depends_on must reference earlier steps only"
            )
        steps.append(
            SubTask(
                description=description,
                depends_on=sorted(set(depends_on)),
                mergeable=bool(raw.get("mergeable", False)),
            )
        )
    return Plan(steps=steps)


def reflect_merge(plan: Plan) -> Plan:
    """Fuse runs of steps where each next step depends only on its
    predecessor and both carry the mergeable mark. Never increases the
    step count and keeps dependencies acyclic (they only point backward)."""
    if not plan.steps:
        return plan
    groups: list[list[int]] = [[0]]
    for i in range(1, len(plan.steps)):
        prev = plan.steps[i - 1]
        cur = plan.steps[i]
        same_group = (
            cur.depends_on == [i - 1]
            and cur.mergeable
            and prev.mergeable
            and (i - 1) in groups[-1]
        )
        if same_group:
            groups[-1].append(i)
        else:
            groups.append([i])

    index_to_group = {}
    for gi, members in enumerate(groups):
        for m in members:
            index_to_group[m] = gi

    merged: list[SubTask] = []
    for gi, members in enumerate(groups):
        description = "; ".join(plan.steps[m].description for m in members)
        deps = set()
        for m in members:
            for d in plan.steps[m].depends_on:
                if index_to_group[d] != gi:
                    deps.add(index_to_group[d])
        merged.append(
            SubTask(
                description=description,
                depends_on=sorted(deps),
                mergeable=all(plan.steps[m].mergeable for m in members),
            )
        )
    return Plan(steps=merged, revision=plan.revision)


class Planner:
    def __init__(self, gateway: Gateway, max_replans: int = 3):
        self.gateway = gateway
        self.max_replans = max_replans

    def plan(self, question: str, schema_summary: str, history_digest: str) -> Plan:
        prompt = load_template("plan").substitute(
            schema=schema_summary, history=history_digest or "none", question=question
        )
        completion = self.gateway.chat([("user", prompt)])
        try:
            return parse_plan(completion)
        except PlanParseError:
            retry = self.gateway.chat(
                [
                    ("user", prompt),
                    ("assistant", completion),
                    (
                        "user",
                        "Reply with only the fenced json list of steps, nothing else.",
                    ),
                ]
            )
            return parse_plan(retry)

    def dispatch(self, plan: Plan, index: int, context_digest: str) -> CGQuery:
        step = plan.steps[index]
        unmet = [d for d in step.depends_on if plan.steps[d].status != "done"]
        if unmet:
            raise DependencyUnmet(f"step {index} waits on {unmet}")
        step.status = "dispatched"
        return CGQuery(
            id=f"step{index}-r{plan.revision}",
            task_description=step.description,
            context=context_digest,
            data_handle="df",
        )

    def judge(self, question: str, plan: Plan) -> Verdict:
        digest_lines = []
        for i, step in enumerate(plan.steps):
            line = f"{i}. [{step.status}] {step.description}"
            if step.result is not None:
                if step.result.status == "ok":
                    line += f" -> output: {step.result.output[:200]}"
                else:
                    line += f" -> {step.result.status}: {step.result.failure_text()[:200]}"
            digest_lines.append(line)
        prompt = load_template("judge").substitute(
            question=question, plan_digest="\n".join(digest_lines)
        )
        completion = self.gateway.chat([("user", prompt)])
        return parse_verdict(completion)

    def summarize(
        self, question: str, plan: Plan, artifacts: list[Artifact]
    ) -> str:
        lines = []
        for i, step in enumerate(plan.steps):
            if step.result is None:
                continue
            lines.append(f"step {i}: {step.description}")
            if step.result.output:
                lines.append(f"  output: {step.result.output[:500]}")
            if step.result.logs.strip():
                lines.append(f"  logs: {step.result.logs.strip()[:300]}")
        for artifact in artifacts:
            lines.append(f"  artifact ({artifact.kind}): {artifact.path}")
        prompt = load_template("summarize").substitute(
            question=question, results_digest="\n".join(lines) or "no results"
        )
        return self.gateway.chat([("user", prompt)])


def parse_verdict(completion: str) -> Verdict:
    """First recognized keyword wins; an unrecognizable judgement counts
    as a non-explicit finish so the turn still terminates."""
    text = completion.strip()
    match = re.search(
        r"\b(FINISH|CONTINUE|REPLAN|CLARIFY)\b[:\s]*", text, re.IGNORECASE
    )
    if match is None:
        return Verdict(action="finish", explicit=False)
    action = match.group(1).lower()
    detail = text[match.end():].strip().splitlines()[0].strip() if text[match.end():].strip() else ""
    if action in ("replan", "clarify"):
        return Verdict(action=action, detail=detail)
    return Verdict(action=action)
