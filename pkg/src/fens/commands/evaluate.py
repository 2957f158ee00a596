"""
`eval`: score a checkpoint on a dataset and write its probability matrix.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict

from fens.core.actions.models import ActionContext, ActionOutput
from fens.core.actions.registry import register
from fens.data.preprocess import preprocess
from fens.training.engine import evaluate, load_model

from .pipeline import load_source
from .settings import PipelineConfig


class Evaluate:
    """
    Load a checkpoint, preprocess the dataset the same way and report metrics.
    """

    name = "eval"

    def execute(self, params: Dict[str, Any], ctx: ActionContext) -> ActionOutput:
        config: PipelineConfig = params["config"]
        config.validate(need_dataset=True)
        checkpoint = Path(params["checkpoint"])
        model = load_model(checkpoint)
        dataset = preprocess(load_source(config.dataset.sources[0], config), config.preprocess)
        metrics, matrix = evaluate(model, dataset)
        out = Path(params.get("matrix") or ctx.home / "eval" / f"{checkpoint.parent.name}-{checkpoint.stem}.txt")
        matrix.write(out)
        return ActionOutput(
            data={"checkpoint": str(checkpoint), "dataset": dataset.name, "samples": matrix.n,
                  "classes": matrix.c, "metrics": metrics.to_dict()},
            artifacts=[str(out)],
        )


register(Evaluate.name, Evaluate())
