"""Plugin catalog for the code generator.

The generator only ever sees descriptors (name, signature, doc, demo);
the callable implementations live on the executor side and are loaded
from the module named in the manifest. That keeps the orchestrator
decoupled from whatever the kernel can import.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import DuplicatePlugin

STUB_PLUGIN_MODULE = "feedbacklens.agent.stub_plugins"
KERNEL_PLUGIN_MODULE = "fbkernel.plugins.builtin"


@dataclass(frozen=True)
class PluginDescriptor:
    name: str
    signature: str
    doc: str
    demo: str
    artifact_kind: str = "file"

    def __post_init__(self) -> None:
        if not self.name.isidentifier():
            raise ValueError(f"plugin name {self.name!r} must be an identifier")


class PluginRegistry:
    """name -> (descriptor, executor-side module path)."""

    def __init__(self) -> None:
        self._plugins: dict[str, tuple[PluginDescriptor, str]] = {}

    def register(self, descriptor: PluginDescriptor, module: str) -> None:
        if descriptor.name in self._plugins:
            raise DuplicatePlugin(f"plugin {descriptor.name!r} already registered")
        self._plugins[descriptor.name] = (descriptor, module)

    def catalog(self) -> list[PluginDescriptor]:
        return [d for d, _ in self._plugins.values()]

    def manifest(self) -> list[dict]:
        """What the executor receives at init: importable entries."""
        return [
            {"name": d.name, "module": module, "signature": d.signature}
            for d, module in self._plugins.values()
        ]

    def __contains__(self, name: str) -> bool:
        return name in self._plugins

    def __len__(self) -> int:
        return len(self._plugins)


def catalog_prompt(catalog: list[PluginDescriptor]) -> str:
    """Render the plugin catalog for the generation prompt."""
    if not catalog:
        return "No plugins are available; use pandas and matplotlib directly."
    blocks = []
    for d in catalog:
        blocks.append(
            f"- {d.signature}\n  {d.doc}\n  Example: {d.demo}"
            f" (produces a {d.artifact_kind} artifact)"
        )
    return "Available plugins, callable directly by name:\n" + "\n".join(blocks)


ISSUE_RIVER = PluginDescriptor(
    name="issue_river",
    signature=(
        "issue_river(df, topic_column='topics', time_column='timestamp',"
        " top_n=7, output='issue_river.png')"
    ),
    doc=(
        "Stacked stream chart of how often the top_n most frequent topics"
        " occur over time. topic_column may hold ';'-separated phrases or"
        " lists. Saves the figure to `output` and returns its path."
    ),
    demo="issue_river(df, top_n=7)",
    artifact_kind="image",
)

WORD_CLOUD = PluginDescriptor(
    name="word_cloud",
    signature="word_cloud(df, text_column='text', output='word_cloud.png')",
    doc=(
        "Frequency-scaled word cloud of the tokens in text_column after"
        " stopword removal. Saves the figure to `output` and returns its path."
    ),
    demo="word_cloud(df, text_column='text')",
    artifact_kind="image",
)


def builtin_registry(executor_kind: str = "stub") -> PluginRegistry:
    module = STUB_PLUGIN_MODULE if executor_kind == "stub" else KERNEL_PLUGIN_MODULE
    registry = PluginRegistry()
    registry.register(ISSUE_RIVER, module)
    registry.register(WORD_CLOUD, module)
    return registry
