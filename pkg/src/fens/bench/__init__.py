"""
CPU latency and memory benchmarks with CSV and markdown reports.
"""

from .env import environment
from .harness import (
    BenchConfig,
    BenchReport,
    bench_ensemble,
    bench_model,
    ensemble_forward,
    measure_latency,
    measure_memory,
    median_time,
)
from .report import COLUMNS, emit_report, parse_csv_report, report_row

__all__ = [
    "COLUMNS",
    "BenchConfig",
    "BenchReport",
    "bench_ensemble",
    "bench_model",
    "emit_report",
    "ensemble_forward",
    "environment",
    "measure_latency",
    "measure_memory",
    "median_time",
    "parse_csv_report",
    "report_row",
]
