"""
Safe execution wrappers that guarantee structured envelopes.
"""

from __future__ import annotations

import logging
import time
from typing import Any, Callable, Dict, Optional, Tuple, TypeVar

from . import envelope
from .errors import FensError

T = TypeVar("T")

logger = logging.getLogger(__name__)


def describe_exception(exc: BaseException) -> Dict[str, Any]:
    if isinstance(exc, FensError):
        return exc.as_error()
    return envelope.build_error("internal_error", f"{type(exc).__name__}: {exc}", recoverable=False)


def safe_execute(operation: str, func: Callable[[], Dict[str, Any]]) -> Dict[str, Any]:
    """
    Executes a command function safely, wrapping all errors into envelopes.
    """
    started = int(time.perf_counter() * 1000)
    try:
        result = func() or {}
        metrics = result.get("metrics", {})
        duration_ms = int(time.perf_counter() * 1000) - started
        metrics = {**metrics, "duration_ms": duration_ms}
        return envelope.build_envelope(
            operation=operation,
            status=result.get("status", "ok"),
            data=result.get("data"),
            artifacts=result.get("artifacts"),
            metrics=metrics,
            error=result.get("error"),
        )
    except Exception as exc:  # noqa: BLE001
        logger.debug("operation=%s failed", operation, exc_info=True)
        return envelope.build_envelope(
            operation=operation,
            status="error",
            error=describe_exception(exc),
            started_ms=started,
        )


def contain(func: Callable[[], T]) -> Tuple[Optional[T], Optional[Dict[str, Any]]]:
    """
    Run func and return (value, None) or (None, error-dict); never raises.
    """
    try:
        return func(), None
    except Exception as exc:  # noqa: BLE001
        return None, describe_exception(exc)
