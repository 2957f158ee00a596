"""
A finished run tree moved to another directory resumes without retraining.

Slow: tunes and trains two families under tfs and hft. Run with `pytest -m slow`.
"""

from __future__ import annotations

import os
import shutil
from pathlib import Path

import pytest

from fens.commands.pipeline import entry_dir, run_pipeline
from fens.commands.settings import build_config
from fens.commands.tables import read_json

pytestmark = pytest.mark.slow

FAMILIES = ("squeeze", "mobile")
STRATEGIES = ("tfs", "hft")

SETTINGS = {
    "dataset": {"sources": ["synth"], "height": 16, "width": 16, "synth_classes": 6, "synth_per_class": 30},
    "preprocess": {"height": 16, "width": 16},
    "model": {"families": list(FAMILIES), "strategies": list(STRATEGIES), "preset": "micro"},
    "train": {"epochs": 2, "batch_size": 16, "lr": 0.003},
    "hpo": {"enabled": True, "max_resource": 3, "eta": 3},
    "pretrain": {"classes": 4, "per_class": 10, "epochs": 1},
    "cv_k": 2,
    "seed": 0,
}


def _stage_mtimes(home: Path) -> dict:
    kept = [p for p in home.rglob("*") if p.is_file() and p.parts[len(home.parts)] != "reports"]
    return {
        p.relative_to(home).as_posix(): p.stat().st_mtime_ns
        for p in kept
        if "entries" in p.parts or "pretrain" in p.parts or p.name == "ensembles.json"
    }


@pytest.fixture(scope="module")
def moved(tmp_path_factory):
    origin = tmp_path_factory.mktemp("origin") / "out"
    config = build_config(SETTINGS, {}, {})
    first = run_pipeline(config, origin)
    assert first["counts"] == {"completed": len(FAMILIES) * len(STRATEGIES)}

    target = tmp_path_factory.mktemp("moved") / "out"
    shutil.copytree(origin, target)
    shutil.rmtree(origin)
    return config, origin, target


def test_moved_tree_reruns_without_recomputing(moved):
    config, _, home = moved
    before = _stage_mtimes(home)
    result = run_pipeline(config, home)
    assert result["counts"] == {"completed": len(FAMILIES) * len(STRATEGIES)}
    assert _stage_mtimes(home) == before


def test_no_artifact_names_the_old_root(moved):
    _, origin, home = moved
    needle = os.fsencode(str(origin.parent))
    leaks = [p.relative_to(home).as_posix() for p in home.rglob("*") if p.is_file() and needle in p.read_bytes()]
    assert leaks == []


def test_tuning_checkpoints_resolve_inside_the_entry(moved):
    _, _, home = moved
    for family in FAMILIES:
        directory = entry_dir(home, "synth", family, "tfs")
        trials = read_json(directory / "tuning.json")["trials"]
        stored = [t["checkpoint"] for t in trials if t.get("checkpoint")]
        assert stored
        for checkpoint in stored:
            assert not Path(checkpoint).is_absolute()
            assert (directory / checkpoint).is_file()
