"""
`run`: the whole pipeline over the experiment matrix.
"""

from __future__ import annotations

from typing import Any, Dict

from fens.core.actions.models import ActionContext, ActionOutput
from fens.core.actions.registry import register

from .pipeline import run_pipeline
from .settings import PipelineConfig


class Run:
    """
    Dataset prep, optional tuning, k-fold training, evaluation, ensembles and reports for every matrix entry.
    """

    name = "run"

    def execute(self, params: Dict[str, Any], ctx: ActionContext) -> ActionOutput:
        config: PipelineConfig = params["config"]
        result = run_pipeline(config, ctx.home)
        counts = result["counts"]
        failed = counts.get("failed", 0)
        status = "ok" if not failed else ("partial" if counts.get("completed") else "error")
        error = None
        if status == "error":
            error = {"code": "training_failed", "message": "every matrix entry failed", "recoverable": True}
        return ActionOutput(status=status, data=result, error=error, artifacts=result["reports"],
                            metrics={"entries": len(result["entries"]), **counts})


register(Run.name, Run())
