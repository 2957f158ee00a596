"""
`report`: comparison tables from a run directory.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict

from fens.core.actions.models import ActionContext, ActionOutput
from fens.core.actions.registry import register
from fens.core.errors import ReportError

from .tables import base_table, combinations_table, summary_table, write_reports


class Report:
    """
    Write base, combination, summary and bench tables as CSV and markdown.
    """

    name = "report"

    def execute(self, params: Dict[str, Any], ctx: ActionContext) -> ActionOutput:
        home = Path(params.get("run_dir") or ctx.home)
        if not home.is_dir():
            raise ReportError(f"run directory not found: {home}")
        written = write_reports(home)
        return ActionOutput(
            data={
                "base_rows": len(base_table(home)[1]),
                "combination_rows": len(combinations_table(home)[1]),
                "summary": summary_table(home)[1],
            },
            artifacts=[str(p) for p in written],
        )


register(Report.name, Report())
