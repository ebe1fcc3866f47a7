"""Engine configuration.

One TOML document configures everything: gateway backend and models,
retrieval/classification defaults, topic-modeling thresholds, agent loop
bounds, kernel limits and the HTTP server. Every field has a usable
default so tests and desk runs work with an empty file.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass
class GatewayConfig:
    mode: str = "mock"  # live | record | replay | mock
    endpoint: str = "https://api.openai.com/v1"
    api_key_env: str = "OPENAI_API_KEY"
    chat_model: str = "gpt-4"
    embed_model: str = "text-embedding-small"
    embed_dim: int = 384
    cassette: str = ""
    temperature: float = 0.0
    top_p: float = 0.0
    max_tokens: int | None = None
    timeout_s: float = 60.0
    requests_per_second: float = 0.0  # 0 disables the rate limiter
    mock_seed: int = 0
    # scripted completions for mock mode: [[pattern, response], ...]
    mock_rules: list[list[str]] = field(default_factory=list)


@dataclass
class ClassifyConfig:
    shots: int = 10
    fold_top_n: int = 10
    train_fraction: float = 0.7


@dataclass
class TopicsConfig:
    max_topics_per_record: int = 3
    n_extra_demos: int = 3
    quality_threshold: float = 0.1
    dedupe_threshold: float = 0.90
    cluster_distance_threshold: float = 0.25
    refinement_iterations: int = 1
    max_phrase_words: int = 8


@dataclass
class AgentConfig:
    max_replans: int = 3
    max_code_attempts: int = 3


@dataclass
class KernelConfig:
    executor: str = "stub"  # stub | kernel
    command: list[str] = field(default_factory=lambda: [sys.executable, "-m", "fbkernel"])
    cell_timeout_s: float = 30.0
    workspace_quota_mb: int = 256


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8240
    token: str = ""  # empty disables auth
    job_workers: int = 2
    frontend_dir: str = ""  # serve the browser UI from here under /ui


@dataclass
class EngineConfig:
    data_dir: Path = Path("./feedbacklens-data")
    store_path: str = ""  # defaults to <data_dir>/records.db
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    classify: ClassifyConfig = field(default_factory=ClassifyConfig)
    topics: TopicsConfig = field(default_factory=TopicsConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    server: ServerConfig = field(default_factory=ServerConfig)
    dimensions: list[dict[str, Any]] = field(default_factory=list)
    topic_task: dict[str, Any] = field(default_factory=dict)

    @property
    def resolved_store_path(self) -> Path:
        if self.store_path:
            return Path(self.store_path)
        return self.data_dir / "records.db"


def _apply(section: Any, values: dict[str, Any]) -> None:
    for key, value in values.items():
        if hasattr(section, key):
            setattr(section, key, value)


def load_config(path: str | Path | None = None) -> EngineConfig:
    """Load an EngineConfig from a TOML file; missing file means defaults."""
    cfg = EngineConfig()
    if path is None:
        return cfg
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    with open(p, "rb") as fh:
        doc = tomllib.load(fh)
    if "data_dir" in doc:
        cfg.data_dir = Path(doc["data_dir"])
    if "store_path" in doc:
        cfg.store_path = doc["store_path"]
    _apply(cfg.gateway, doc.get("gateway", {}))
    _apply(cfg.classify, doc.get("classify", {}))
    _apply(cfg.topics, doc.get("topics", {}))
    _apply(cfg.agent, doc.get("agent", {}))
    _apply(cfg.kernel, doc.get("kernel", {}))
    _apply(cfg.server, doc.get("server", {}))
    cfg.dimensions = doc.get("dimensions", [])
    cfg.topic_task = doc.get("topic_task", {})
    return cfg
