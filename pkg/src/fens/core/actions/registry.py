"""
Action registry.

Command modules register their actions at import time; the CLI resolves
subcommands through `get`.
"""

from __future__ import annotations

from typing import Any, Dict, Optional

_ACTIONS: Dict[str, Any] = {}


def register(action_name: str, action_impl: Any) -> None:
    _ACTIONS[action_name] = action_impl


def get(action_name: str) -> Optional[Any]:
    return _ACTIONS.get(action_name)


def list_actions() -> Dict[str, str]:
    return {name: (getattr(impl, "__doc__", "") or "").strip() for name, impl in sorted(_ACTIONS.items())}
