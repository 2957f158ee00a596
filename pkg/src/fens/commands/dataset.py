"""
`dataset synth` and `dataset inspect`.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict

from fens.core.actions.models import ActionContext, ActionOutput
from fens.core.actions.registry import register
from fens.core.coerce import to_int, to_name
from fens.data.dataset import sidecar_path
from fens.data.loaders import load_dataset, write_csv_dataset
from fens.data.synth import synth_glyphs


class DatasetSynth:
    """
    Render a synthetic glyph set to <out>/<name>.csv plus its metadata sidecar.
    """

    name = "dataset.synth"

    def execute(self, params: Dict[str, Any], ctx: ActionContext) -> ActionOutput:
        name = to_name(params.get("name"), fallback="synth")
        dataset = synth_glyphs(
            to_int(params.get("classes", 28), "classes"),
            to_int(params.get("per_class", 50), "per_class"),
            to_int(params.get("height", 32), "height"),
            to_int(params.get("width", 32), "width"),
            seed=to_int(params.get("seed", 0), "seed"),
            name=name,
        )
        out_dir = Path(params.get("out") or ctx.home / "datasets")
        path = write_csv_dataset(dataset, out_dir / f"{name}.csv")
        return ActionOutput(
            data={"dataset": dataset.describe(), "path": str(path)},
            artifacts=[str(path), str(sidecar_path(path))],
        )


class DatasetInspect:
    """
    Load a CSV file or image folder and describe it.
    """

    name = "dataset.inspect"

    def execute(self, params: Dict[str, Any], ctx: ActionContext) -> ActionOutput:
        dataset = load_dataset(
            Path(params["source"]),
            to_int(params.get("height", 32), "height"),
            to_int(params.get("width", 32), "width"),
        )
        counts = dataset.class_counts()
        return ActionOutput(data={
            "dataset": dataset.describe(),
            "metadata": {k: v for k, v in dataset.metadata.items() if k != "class_map"},
            "per_class": counts.tolist(),
        })


register(DatasetSynth.name, DatasetSynth())
register(DatasetInspect.name, DatasetInspect())
