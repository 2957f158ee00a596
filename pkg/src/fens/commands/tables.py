"""
Comparison tables built purely from on-disk pipeline artifacts.

    base          one row per (dataset, model, strategy) with test metrics
    combinations  one row per (dataset, combination); soft/hard/weighted column groups
    summary       best base model vs best ensemble per dataset, with the delta
    bench         latency and memory per subject
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from fens.bench.harness import BenchReport
from fens.bench.report import emit_report
from fens.core.errors import ReportError

METRICS = ("accuracy", "f1", "precision", "recall")

Table = Tuple[List[str], List[List[Any]]]


def read_json(path: Path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def completed_entries(dataset_dir: Path) -> List[Tuple[Path, Dict[str, Any]]]:
    root = Path(dataset_dir) / "entries"
    if not root.is_dir():
        return []
    found = []
    for directory in sorted(p for p in root.iterdir() if p.is_dir()):
        if (directory / "entry.json").exists():
            found.append((directory, read_json(directory / "entry.json")))
    return found


def dataset_dirs(home: Path) -> List[Path]:
    return sorted(p for p in Path(home).iterdir() if p.is_dir() and (p / "entries").is_dir())


# ---------------------------
# Tables
# ---------------------------

def base_table(home: Path) -> Table:
    header = ["dataset", "model", "strategy", *METRICS, "val_score"]
    rows = []
    for directory in dataset_dirs(home):
        for _, data in completed_entries(directory):
            rows.append([data["dataset"], data["family"], data["strategy"].upper(),
                         *(data["test"][m] for m in METRICS), data["val_score"]])
    return header, rows


def combinations_table(home: Path) -> Table:
    voting: Optional[Sequence[str]] = None
    rows = []
    for directory in dataset_dirs(home):
        path = directory / "ensembles.json"
        if not path.exists():
            continue
        payload = read_json(path)
        voting = voting or payload["voting"]
        for combo in payload["combinations"]:
            rows.append([payload["dataset"], combo["name"],
                         *(combo["metrics"][v][m] for v in voting for m in METRICS)])
    header = ["dataset", "combination", *(f"{v}_{m}" for v in (voting or ()) for m in METRICS)]
    return header, rows


def summary_table(home: Path) -> Table:
    header = ["dataset", "best_base", "base_accuracy", "best_ensemble", "ensemble_accuracy", "delta"]
    rows = []
    for directory in dataset_dirs(home):
        entries = [data for _, data in completed_entries(directory)]
        if not entries:
            continue
        # earliest entry wins ties
        base = max(reversed(entries), key=lambda d: d["test"]["accuracy"])
        row: List[Any] = [base["dataset"], f"{base['family']}-{base['strategy'].upper()}", base["test"]["accuracy"]]
        path = directory / "ensembles.json"
        if path.exists():
            payload = read_json(path)
            best_name, best_acc = "", float("-inf")
            for combo in payload["combinations"]:
                for v in payload["voting"]:
                    acc = combo["metrics"][v]["accuracy"]
                    if acc > best_acc:
                        best_name, best_acc = f"{combo['name']} ({v})", acc
            row += [best_name, best_acc, best_acc - base["test"]["accuracy"]]
        else:
            row += ["", None, None]
        rows.append(row)
    return header, rows


def bench_reports(home: Path) -> List[BenchReport]:
    reports = []
    for directory in dataset_dirs(home):
        path = directory / "bench.json"
        if not path.exists():
            continue
        for raw in read_json(path)["reports"]:
            fields = {k: v for k, v in raw.items() if k != "members"}
            reports.append(BenchReport(**fields))
    return reports


# ---------------------------
# Rendering
# ---------------------------

def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def to_csv(table: Table) -> str:
    header, rows = table
    lines = [",".join(header)]
    lines += [",".join(_cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def to_markdown(table: Table, *, mark_max: bool = True) -> str:
    """
    The maximum of each numeric column is set in bold.
    """
    header, rows = table
    best: Dict[int, float] = {}
    if mark_max:
        for col in range(len(header)):
            values = [r[col] for r in rows if isinstance(r[col], float)]
            if values:
                best[col] = max(values)
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    for row in rows:
        cells = []
        for col, value in enumerate(row):
            text = _cell(value)
            if col in best and isinstance(value, float) and value == best[col]:
                text = f"**{text}**"
            cells.append(text)
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def write_reports(home: Path) -> List[Path]:
    home = Path(home)
    base = base_table(home)
    if not base[1]:
        raise ReportError(f"no completed entries under {home}")
    out_dir = home / "reports"
    out_dir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    for name, table in (("base", base), ("combinations", combinations_table(home)), ("summary", summary_table(home))):
        written.append(_write(out_dir / f"{name}.csv", to_csv(table)))
        written.append(_write(out_dir / f"{name}.md", to_markdown(table)))
    reports = bench_reports(home)
    if reports:
        written.append(_write(out_dir / "bench.csv", emit_report(reports, "csv")))
        written.append(_write(out_dir / "bench.md", emit_report(reports, "markdown")))
    return written


def _write(path: Path, text: str) -> Path:
    if not path.exists() or path.read_text(encoding="utf-8") != text:
        path.write_text(text, encoding="utf-8")
    return path
