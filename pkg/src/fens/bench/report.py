"""
CSV and markdown renderings of benchmark reports.
"""

from __future__ import annotations

import csv
import io
from typing import Any, Dict, List, Sequence

from fens.core.errors import ParseError

from .harness import BenchReport

COLUMNS = (
    "subject",
    "latency_batch_s",
    "inference_time_img_s",
    "load_memory_mb",
    "inference_memory_img_mb",
    "params",
    "macs",
)
_INT_COLUMNS = {"params", "macs"}
_FLOAT_COLUMNS = set(COLUMNS) - _INT_COLUMNS - {"subject"}

MARKDOWN_HEADERS = (
    "Model",
    "Latency (batch) s",
    "Inference time (img) s",
    "Load memory MB",
    "Inference memory (img) MB",
    "Params",
    "MACs",
)


def report_row(report: BenchReport) -> Dict[str, Any]:
    return {column: getattr(report, column) for column in COLUMNS}


def emit_csv(reports: Sequence[BenchReport]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(COLUMNS)
    for report in reports:
        row = report_row(report)
        writer.writerow([repr(row[c]) if c in _FLOAT_COLUMNS else row[c] for c in COLUMNS])
    return buffer.getvalue()


def emit_markdown(reports: Sequence[BenchReport]) -> str:
    lines = [
        "| " + " | ".join(MARKDOWN_HEADERS) + " |",
        "|" + "|".join(["---"] + ["---:"] * (len(MARKDOWN_HEADERS) - 1)) + "|",
    ]
    for r in reports:
        lines.append(
            f"| {r.subject} | {r.latency_batch_s:.3f} | {r.inference_time_img_s:.3f} | {r.load_memory_mb:.2f} | "
            f"{r.inference_memory_img_mb:.2f} | {r.params:,} | {r.macs:,} |"
        )
    if reports:
        first = reports[0]
        cpu = first.environment.get("cpu", "unknown")
        lines.append("")
        lines.append(
            f"batch={first.batch} runs={first.runs} memory={first.memory_method} cpu={cpu!r} "
            f"cores={first.environment.get('cores', '?')}"
        )
    return "\n".join(lines) + "\n"


def emit_report(reports: Sequence[BenchReport], fmt: str = "csv") -> str:
    if fmt == "markdown":
        return emit_markdown(reports)
    return emit_csv(reports)


def parse_csv_report(text: str) -> List[Dict[str, Any]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != COLUMNS:
        raise ParseError(f"unexpected benchmark header {header!r}")
    rows = []
    for line_no, values in enumerate(reader, start=2):
        if not values:
            continue
        if len(values) != len(COLUMNS):
            raise ParseError(f"line {line_no}: expected {len(COLUMNS)} fields", details={"line": line_no})
        row: Dict[str, Any] = {}
        try:
            for column, value in zip(COLUMNS, values):
                if column in _INT_COLUMNS:
                    row[column] = int(value)
                elif column in _FLOAT_COLUMNS:
                    row[column] = float(value)
                else:
                    row[column] = value
        except ValueError as exc:
            raise ParseError(f"line {line_no}: {exc}", details={"line": line_no}) from exc
        rows.append(row)
    return rows
