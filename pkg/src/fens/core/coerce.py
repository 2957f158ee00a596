"""
Strict coercion helpers for values coming from JSON config files and CLI flags.
"""

from __future__ import annotations

from typing import Any, Iterable, List, Optional, Sequence

from .errors import ConfigError

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def to_float(value: Any, key: str = "value") -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {value!r}", details={"key": key}) from None


def to_int(value: Any, key: str = "value") -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected an integer, got {value!r}", details={"key": key})
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected an integer, got {value!r}", details={"key": key}) from None
    if not number.is_integer():
        raise ConfigError(f"{key}: expected an integer, got {value!r}", details={"key": key})
    return int(number)


def to_bool(value: Any, key: str = "value") -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in _TRUE:
        return True
    if text in _FALSE:
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}", details={"key": key})


def to_name(value: Any, fallback: str = "unnamed") -> str:
    text = "" if value is None else str(value).strip()
    return text or fallback


def to_list(value: Any, key: str = "value") -> List[str]:
    """
    Accepts "a,b,c" or a JSON list; returns stripped non-empty names.
    """
    if value is None:
        return []
    if isinstance(value, str):
        items: Iterable[Any] = value.split(",")
    elif isinstance(value, (list, tuple)):
        items = value
    else:
        raise ConfigError(f"{key}: expected a list, got {value!r}", details={"key": key})
    return [str(item).strip() for item in items if str(item).strip()]


def to_choice(value: Any, choices: Sequence[str], key: str = "value") -> str:
    text = str(value).strip().lower()
    if text not in choices:
        raise ConfigError(
            f"{key}: {value!r} is not one of {', '.join(choices)}",
            details={"key": key, "choices": list(choices)},
        )
    return text


def to_float_pair(value: Any, key: str = "value") -> Optional[List[float]]:
    if value is None:
        return None
    items = to_list(value, key) if isinstance(value, str) else list(value)
    if len(items) != 2:
        raise ConfigError(f"{key}: expected [low, high], got {value!r}", details={"key": key})
    return [to_float(items[0], key), to_float(items[1], key)]
