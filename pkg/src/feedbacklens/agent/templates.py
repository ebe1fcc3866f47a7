"""Prompt templates shipped as package assets.

string.Template is used deliberately: the templates contain JSON examples
full of braces, which str.format would mangle.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from string import Template


@lru_cache(maxsize=None)
def load_template(name: str) -> Template:
    text = (
        resources.files("feedbacklens.agent")
        .joinpath(f"templates/{name}.txt")
        .read_text(encoding="utf-8")
    )
    return Template(text)
