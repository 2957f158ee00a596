"""
`train`: k-fold training plus test evaluation for one entry.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Any, Dict

from fens.core.actions.models import ActionContext, ActionOutput
from fens.core.actions.registry import register

from .pipeline import entry_dir, prepare_dataset, pretrain_source, run_entry
from .settings import PipelineConfig


class Train:
    """
    Cross-validate one family under one strategy, keep the best fold and score it on the test split.
    """

    name = "train"

    def execute(self, params: Dict[str, Any], ctx: ActionContext) -> ActionOutput:
        config: PipelineConfig = params["config"]
        family, strategy = params["family"], params["strategy"]
        config = replace(config, model=replace(config.model, families=(family,), strategies=(strategy,)))
        config.validate(need_dataset=True)

        bundle = prepare_dataset(config.dataset.sources[0], config, ctx.home)
        source = pretrain_source(family, config, ctx.home) if strategy != "tfs" else None
        data = run_entry(bundle, family, strategy, config, ctx.home, source, jobs=ctx.jobs)
        directory = entry_dir(ctx.home, bundle.name, family, strategy)
        return ActionOutput(
            data=data,
            artifacts=[str(directory / "entry.json"), str(directory / "test.txt"), str(directory / "val.txt")],
        )


register(Train.name, Train())
