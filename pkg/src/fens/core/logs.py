"""
Line-oriented key=value logging.

Records look like:
    ts=2026-01-01T10:00:00 level=info logger=fens.training.engine event=epoch_done run=... epoch=3
"""

from __future__ import annotations

import logging
import sys
from datetime import datetime, timezone
from typing import Any

_RESERVED = set(vars(logging.makeLogRecord({})).keys()) | {"message", "asctime"}


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        text = f"{value:.6g}"
    else:
        text = str(value)
    if not text or any(ch.isspace() for ch in text) or "=" in text or '"' in text:
        text = '"' + text.replace('"', '\\"') + '"'
    return text


class KeyValueFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        ts = datetime.fromtimestamp(record.created, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%S")
        parts = [
            f"ts={ts}",
            f"level={record.levelname.lower()}",
            f"logger={record.name}",
        ]
        event = getattr(record, "event", None)
        if event:
            parts.append(f"event={event}")
        message = record.getMessage()
        if message and message != event:
            parts.append(f"msg={_format_value(message)}")
        for key, value in sorted(getattr(record, "fields", {}).items()):
            parts.append(f"{key}={_format_value(value)}")
        if record.exc_info:
            parts.append(f"exc={_format_value(self.formatException(record.exc_info))}")
        return " ".join(parts)


def log_event(logger: logging.Logger, event: str, level: int = logging.INFO, **fields: Any) -> None:
    if logger.isEnabledFor(level):
        logger.log(level, event, extra={"event": event, "fields": fields})


def configure_logging(verbosity: int = 0) -> None:
    """
    verbosity: -1 quiet (warnings), 0 info, >=1 debug.
    """
    level = logging.INFO
    if verbosity < 0:
        level = logging.WARNING
    elif verbosity > 0:
        level = logging.DEBUG

    root = logging.getLogger("fens")
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(KeyValueFormatter())
    root.addHandler(handler)
    root.setLevel(level)
    root.propagate = False
