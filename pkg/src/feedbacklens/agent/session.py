"""One conversational analysis session.

A session owns a workspace directory, a data snapshot loaded into an
executor, and the bounded plan / generate / execute / judge loop that
turns a question into an AgentResponse. Turns are serialized; history is
append-only and feeds follow-up planning.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import AttemptsExhausted, NoCodeBlock, PlanParseError
from ..gateway import Gateway
from .codegen import CodeGenerator
from .executor import Artifact, Executor
from .planner import AgentResponse, Plan, Planner, reflect_merge
from .plugins import PluginRegistry

log = logging.getLogger(__name__)


@dataclass
class SessionState:
    history: list[tuple[str, AgentResponse]] = field(default_factory=list)
    plan: Plan | None = None
    turn: int = 0


class Session:
    def __init__(
        self,
        session_id: str,
        gateway: Gateway,
        executor: Executor,
        workspace: str | Path,
        schema_summary: str = "",
        registry: PluginRegistry | None = None,
        max_replans: int = 3,
    ):
        self.id = session_id
        self.workspace = Path(workspace)
        self.planner = Planner(gateway, max_replans=max_replans)
        self.codegen = CodeGenerator(
            gateway, catalog=registry.catalog() if registry else []
        )
        self.executor = executor
        self.schema_summary = schema_summary
        self.max_replans = max_replans
        self.state = SessionState()
        self.turn_lock = threading.Lock()
        self.closed = False

    def start(self, snapshot_path: str | Path, manifest: list[dict]) -> None:
        self.workspace.mkdir(parents=True, exist_ok=True)
        self.executor.init(snapshot_path, manifest)

    def close(self) -> None:
        self.executor.close()
        self.closed = True

    # --- the turn loop ---------------------------------------------------------

    def ask(self, question: str) -> AgentResponse:
        with self.turn_lock:
            response = self._run_turn(question)
            self.state.history.append((question, response))
            self.state.turn += 1
            return response

    def _history_digest(self, limit: int = 3) -> str:
        lines = []
        for user_text, response in self.state.history[-limit:]:
            lines.append(f"analyst: {user_text}")
            lines.append(f"assistant ({response.status}): {response.text[:200]}")
        return "\n".join(lines)

    def _run_turn(self, question: str) -> AgentResponse:
        try:
            plan = self.planner.plan(question, self.schema_summary, self._history_digest())
        except PlanParseError as exc:
            return AgentResponse(
                text=f"I could not derive an executable plan: {exc}", status="failed"
            )
        plan = reflect_merge(plan)
        self.state.plan = plan

        artifacts: list[Artifact] = []
        executed_sources: list[str] = []
        # Hard cap: every iteration either finishes the turn, executes at
        # least one step, or burns one replan, all of which are bounded.
        max_iterations = (self.max_replans + 1) * (len(plan.steps) + 2) + 2
        for _ in range(max_iterations):
            failed_hard = self._execute_ready_steps(plan, artifacts, executed_sources)
            verdict = self.planner.judge(question, plan)

            if verdict.action == "clarify":
                return AgentResponse(
                    text=verdict.detail or "Could you make the request more specific?",
                    status="clarification_needed",
                )
            # a failed step escalates to a replan unless the judge
            # explicitly closed or redirected the turn
            escalate = failed_hard and (
                verdict.action == "continue" or not verdict.explicit
            )
            if verdict.action == "replan" or escalate:
                if plan.revision >= self.max_replans:
                    return AgentResponse(
                        text=(
                            "The plan kept failing and the replan budget of"
                            f" {self.max_replans} is exhausted:"
                            f" {verdict.detail or 'step failure'}"
                        ),
                        status="failed",
                        artifacts=artifacts,
                    )
                followup = (
                    f"{question}\n\nThe previous plan (revision {plan.revision})"
                    f" failed: {verdict.detail or self._failure_digest(plan)}."
                    " Produce a corrected plan."
                )
                try:
                    new_plan = self.planner.plan(
                        followup, self.schema_summary, self._history_digest()
                    )
                except PlanParseError as exc:
                    return AgentResponse(
                        text=f"Replanning failed: {exc}", status="failed",
                        artifacts=artifacts,
                    )
                new_plan.revision = plan.revision + 1
                plan = reflect_merge(new_plan)
                plan.revision = new_plan.revision
                self.state.plan = plan
                continue
            if verdict.action == "continue" and plan.pending():
                continue
            # finish (or nothing left to run)
            return self._finish(question, plan, artifacts, executed_sources)
        return AgentResponse(
            text="The turn exceeded its execution budget.", status="failed",
            artifacts=artifacts,
        )

    def _execute_ready_steps(
        self,
        plan: Plan,
        artifacts: list[Artifact],
        executed_sources: list[str],
    ) -> bool:
        """Run pending steps in order until none are ready or one fails
        for good. Returns True when a step failed."""
        progress = True
        while progress:
            progress = False
            for index in plan.pending():
                step = plan.steps[index]
                if any(plan.steps[d].status != "done" for d in step.depends_on):
                    continue
                context = self._context_digest(plan, step.depends_on)
                query = self.planner.dispatch(plan, index, context)
                try:
                    ok = self._run_query(plan, index, query, artifacts, executed_sources)
                except (NoCodeBlock, AttemptsExhausted) as exc:
                    step.status = "failed"
                    log.warning("session %s step %d failed: %s", self.id, index, exc)
                    return True
                if not ok:
                    step.status = "failed"
                    return True
                progress = True
        return False

    def _run_query(self, plan, index, query, artifacts, executed_sources) -> bool:
        step = plan.steps[index]
        cell = self.codegen.generate(query)
        while True:
            violations = self.codegen.verify(cell)
            if violations:
                failure = "verification failed: " + "; ".join(violations)
            else:
                cell_id = f"t{self.state.turn}s{index}a{cell.attempt}"
                result = self.executor.execute(cell_id, cell.source)
                step.result = result
                if result.status == "ok":
                    step.status = "done"
                    artifacts.extend(result.artifacts)
                    executed_sources.append(cell.source)
                    return True
                failure = f"{result.status}: {result.failure_text()}"
            cell = self.codegen.repair(cell, failure, query)  # raises when exhausted

    def _context_digest(self, plan: Plan, depends_on: list[int]) -> str:
        lines = []
        for d in depends_on:
            result = plan.steps[d].result
            if result is not None and result.output:
                lines.append(f"step {d} output: {result.output[:300]}")
        return "\n".join(lines)

    def _failure_digest(self, plan: Plan) -> str:
        parts = []
        for i in plan.failed():
            result = plan.steps[i].result
            reason = result.failure_text() if result else "code generation failed"
            parts.append(f"step {i}: {reason}")
        return "; ".join(parts) or "unknown failure"

    def _finish(
        self,
        question: str,
        plan: Plan,
        artifacts: list[Artifact],
        executed_sources: list[str],
    ) -> AgentResponse:
        existing = [
            a for a in artifacts if (self.workspace / a.path).exists()
        ]
        try:
            text = self.planner.summarize(question, plan, existing)
        except Exception as exc:  # gateway failure: return what we have
            return AgentResponse(
                text=f"Analysis ran but the summary failed: {exc}",
                status="failed",
                artifacts=existing,
            )
        return AgentResponse(
            text=text,
            status="answered",
            artifacts=existing,
            code_shown="\n\n".join(executed_sources) or None,
        )
