"""HTTP service and CLI binding the engine together."""

from .state import EngineState
from .app import create_app

__all__ = ["EngineState", "create_app"]
