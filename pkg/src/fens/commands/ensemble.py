"""
`ensemble`: evaluate every combination over the members already on disk.
"""

from __future__ import annotations

from typing import Any, Dict, List

from fens.core.actions.models import ActionContext, ActionOutput
from fens.core.actions.registry import register
from fens.core.errors import ReportError
from fens.ensemble.matrix import write_manifest

from .pipeline import ensemble_stage, member_from_entry
from .settings import PipelineConfig
from .tables import completed_entries, dataset_dirs


class Ensemble:
    """
    Rebuild each dataset's member manifest from completed entries and score all combinations.
    """

    name = "ensemble"

    def execute(self, params: Dict[str, Any], ctx: ActionContext) -> ActionOutput:
        config: PipelineConfig = params["config"]
        config.validate()
        wanted = params.get("dataset")
        results: Dict[str, Any] = {}
        artifacts: List[str] = []
        for directory in dataset_dirs(ctx.home) if ctx.home.is_dir() else []:
            if wanted and directory.name != wanted:
                continue
            members = [member_from_entry(d, data) for d, data in completed_entries(directory)]
            if not members:
                continue
            write_manifest(directory / "members.json", members, directory / "matrices")
            payload = ensemble_stage(directory, config)
            results[directory.name] = [
                {"name": c["name"], **{v: c["metrics"][v]["accuracy"] for v in payload["voting"]}}
                for c in payload["combinations"]
            ]
            artifacts.append(str(directory / "ensembles.json"))
        if not results:
            raise ReportError(f"no completed entries to ensemble under {ctx.home}")
        return ActionOutput(data={"ensembles": results}, artifacts=artifacts)


register(Ensemble.name, Ensemble())
