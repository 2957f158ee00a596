"""
Error model shared by every fens module.

Each error carries a stable machine-readable `code`, a human message, a
`recoverable` hint and optional lightweight `details` (never a full trace).
The CLI layer turns them into envelopes via `envelope.build_error`.
"""

from __future__ import annotations

from typing import Any, Dict, Optional


class FensError(Exception):
    code = "internal_error"
    recoverable = False

    def __init__(
        self,
        message: str,
        *,
        details: Optional[Dict[str, Any]] = None,
        recoverable: Optional[bool] = None,
    ) -> None:
        super().__init__(message)
        self.message = message
        self.details = details or {}
        if recoverable is not None:
            self.recoverable = recoverable

    def as_error(self) -> Dict[str, Any]:
        from fens.core.envelope import build_error

        return build_error(self.code, self.message, recoverable=self.recoverable, details=self.details)


# tensor-core
class DimensionError(FensError):
    code = "dimension_error"


class GeometryError(FensError):
    code = "geometry_error"


class DivisibilityError(FensError):
    code = "divisibility_error"


class StatisticsError(FensError):
    code = "statistics_error"


class StateError(FensError):
    code = "state_error"


class NumericError(FensError):
    code = "numeric_error"


class LabelError(FensError):
    code = "label_error"


# model-zoo
class SpecError(FensError):
    code = "spec_error"


# data
class ParseError(FensError):
    code = "parse_error"


class DatasetError(FensError):
    code = "dataset_error"


# training
class CheckpointError(FensError):
    code = "checkpoint_corrupt"


class TrainingFailed(FensError):
    code = "training_failed"
    recoverable = True


# hpo
class TrialFailed(FensError):
    code = "trial_failed"
    recoverable = True


# ensemble
class EnsembleError(FensError):
    code = "ensemble_error"


# bench
class MemoryProbeUnsupported(FensError):
    code = "unsupported"


class BenchConflict(FensError):
    code = "bench_conflict"
    recoverable = True


# cli
class ConfigError(FensError):
    code = "invalid_config"


class UsageError(FensError):
    code = "usage_error"

    def __init__(self, message: str, *, usage: str = "", details=None) -> None:
        super().__init__(message, details=details)
        self.usage = usage


class ReportError(FensError):
    code = "no_results"
