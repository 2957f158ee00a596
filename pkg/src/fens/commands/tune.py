"""
`tune`: Hyperband for one (dataset, family, strategy) entry.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Any, Dict

from fens.core.actions.models import ActionContext, ActionOutput
from fens.core.actions.registry import register

from .pipeline import entry_dir, entry_spec, prepare_dataset, pretrain_source, tune_entry
from .settings import PipelineConfig


class Tune:
    """
    Run Hyperband on fold 0 and write the tuning report.
    """

    name = "tune"

    def execute(self, params: Dict[str, Any], ctx: ActionContext) -> ActionOutput:
        config: PipelineConfig = params["config"]
        family, strategy = params["family"], params["strategy"]
        config = replace(config, model=replace(config.model, families=(family,), strategies=(strategy,)))
        config.validate(need_dataset=True)

        bundle = prepare_dataset(config.dataset.sources[0], config, ctx.home)
        source = pretrain_source(family, config, ctx.home) if strategy != "tfs" else None
        train = replace(config.train, strategy=strategy, source_checkpoint=str(source) if source else None).validate()
        directory = entry_dir(ctx.home, bundle.name, family, strategy)
        winner, tuning = tune_entry(bundle, entry_spec(bundle, family, config), train, config, directory)
        return ActionOutput(
            data={"dataset": bundle.name, "family": family, "strategy": strategy,
                  "winner": tuning, "train": winner.to_dict()},
            artifacts=[str(directory / "tuning.json")],
        )


register(Tune.name, Tune())
