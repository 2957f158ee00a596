"""
Best-effort description of the host a benchmark ran on.
"""

from __future__ import annotations

import os
import platform
from typing import Any, Dict

import numpy as np
import psutil


def _cpu_model() -> str:
    name = platform.processor()
    if name:
        return name
    try:
        with open("/proc/cpuinfo", encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("model name"):
                    return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.machine() or "unknown"


def environment() -> Dict[str, Any]:
    return {
        "cpu": _cpu_model(),
        "cores": psutil.cpu_count(logical=False) or os.cpu_count() or 0,
        "logical_cores": psutil.cpu_count(logical=True) or os.cpu_count() or 0,
        "ram_mb": round(psutil.virtual_memory().total / 2**20, 1),
        "platform": platform.platform(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
