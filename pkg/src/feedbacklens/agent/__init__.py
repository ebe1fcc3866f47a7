"""Question-answering agent: planner, code generator, executors."""

from .executor import Artifact, ExecutionResult, Executor, KernelClient
from .stub import StubExecutor
from .plugins import PluginDescriptor, PluginRegistry, builtin_registry, catalog_prompt
from .codegen import CGQuery, CodeCell, CodeGenerator, extract_code
from .planner import AgentResponse, Plan, Planner, SubTask, reflect_merge
from .session import Session, SessionState

__all__ = [
    "Artifact",
    "ExecutionResult",
    "Executor",
    "KernelClient",
    "StubExecutor",
    "PluginDescriptor",
    "PluginRegistry",
    "builtin_registry",
    "catalog_prompt",
    "CGQuery",
    "CodeCell",
    "CodeGenerator",
    "extract_code",
    "AgentResponse",
    "Plan",
    "Planner",
    "SubTask",
    "reflect_merge",
    "Session",
    "SessionState",
]
