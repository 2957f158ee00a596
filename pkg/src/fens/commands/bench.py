"""
`bench`: latency and memory for checkpoints, or for every member on disk.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List

from fens.bench.harness import BenchReport, bench_ensemble, bench_model
from fens.bench.report import emit_report
from fens.core.actions.models import ActionContext, ActionOutput
from fens.core.actions.registry import register
from fens.core.errors import ReportError
from fens.training.engine import load_model

from .pipeline import bench_stage
from .settings import PipelineConfig
from .tables import bench_reports, dataset_dirs


def _loader(path: Path):
    return lambda: load_model(path)


class Bench:
    """
    With --checkpoint: each checkpoint alone, plus their ensemble when more
    than one is given. Without: every completed entry under the home directory.
    """

    name = "bench"

    def execute(self, params: Dict[str, Any], ctx: ActionContext) -> ActionOutput:
        config: PipelineConfig = params["config"]
        config.validate()
        bench = config.bench.config
        checkpoints = [Path(p) for p in params.get("checkpoints") or []]
        fmt = params.get("format") or "csv"

        if checkpoints:
            subjects = [(f"{p.parent.name}/{p.stem}", p) for p in checkpoints]
            reports: List[BenchReport] = [bench_model(s, _loader(p), bench) for s, p in subjects]
            if len(subjects) > 1:
                reports.append(bench_ensemble([(s, _loader(p)) for s, p in subjects], params.get("voting") or "soft",
                                              bench, subject="ensemble"))
        else:
            dirs = dataset_dirs(ctx.home) if ctx.home.is_dir() else []
            for directory in dirs:
                bench_stage(directory, config)
            reports = bench_reports(ctx.home)
            if not reports:
                raise ReportError(f"nothing to benchmark under {ctx.home}")

        out = Path(params.get("report") or ctx.home / "bench" / f"bench.{'md' if fmt == 'markdown' else 'csv'}")
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(emit_report(reports, fmt), encoding="utf-8")
        return ActionOutput(
            data={"reports": [r.to_dict() for r in reports], "batch": bench.batch, "runs": bench.runs},
            artifacts=[str(out)],
        )


register(Bench.name, Bench())
