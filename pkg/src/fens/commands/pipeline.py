"""
The experiment pipeline: dataset -> (HPO) -> k-fold training -> test
evaluation -> ensembles -> reports, over datasets x families x strategies.

Output layout under the home directory (every path inside is relative):
    <dataset>/data/splits.json
    <dataset>/entries/<family>-<strategy>/{stamp.json,entry.json,test.txt,val.txt,tuning.json,runs/}
    <dataset>/members.json
    <dataset>/ensembles.json
    <dataset>/bench.json
    pretrain/<family>/{stamp.json,runs/}
    reports/*.csv, reports/*.md
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from fens.bench.harness import bench_ensemble, bench_model
from fens.core.digest import file_digest, json_digest
from fens.core.errors import ConfigError, EnsembleError, FensError, TrainingFailed
from fens.core.logs import log_event
from fens.core.queue import WorkerPool
from fens.data.dataset import Dataset
from fens.data.loaders import load_dataset
from fens.data.preprocess import preprocess
from fens.data.splits import FoldAssignment, holdout_indices, kfold
from fens.data.synth import synth_glyphs
from fens.ensemble.combos import enumerate_combinations, evaluate_combination
from fens.ensemble.matrix import MemberRecord, ProbabilityMatrix, read_manifest, write_manifest
from fens.hpo.hyperband import run_hyperband
from fens.hpo.objective import TrainingObjective
from fens.hpo.report import tuning_report, write_tuning_report
from fens.training.config import TrainConfig
from fens.training.engine import evaluate, load_best, load_model, run_folds, train_run
from fens.zoo.spec import ModelSpec, resolve_spec, spec_digest

from .settings import SYNTH_SOURCE, PipelineConfig
from .stamps import Stage
from .tables import completed_entries, read_json, write_reports

logger = logging.getLogger(__name__)


def _write_json(path: Path, payload: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# ---------------------------
# Datasets
# ---------------------------

@dataclass(frozen=True)
class DatasetBundle:
    """
    pool feeds cross-validation; selection is the shared split every member
    is scored on for weights and Best-Ens; test is touched only by evaluation.
    """
    name: str
    pool: Dataset
    selection: Dataset
    test: Dataset
    folds: FoldAssignment

    @property
    def input_shape(self) -> Tuple[int, int, int]:
        return self.pool.image_shape

    @property
    def num_classes(self) -> int:
        return self.pool.num_classes

    def digest(self) -> str:
        return json_digest({
            "pool": self.pool.digest(),
            "selection": self.selection.digest(),
            "test": self.test.digest(),
            "folds": self.folds.to_dict(),
        })


def load_source(source: str, config: PipelineConfig) -> Dataset:
    ds = config.dataset
    if source == SYNTH_SOURCE:
        return synth_glyphs(ds.synth_classes, ds.synth_per_class, ds.height, ds.width, seed=config.seed)
    return load_dataset(Path(source), ds.height, ds.width)


def prepare_dataset(source: str, config: PipelineConfig, home: Path) -> DatasetBundle:
    raw = preprocess(load_source(source, config), config.preprocess)
    train_idx, test_idx = holdout_indices(raw, config.dataset.train_fraction, config.seed)
    train_part = raw.subset(train_idx)
    pool_local, selection_local = holdout_indices(train_part, 1.0 - config.dataset.selection_fraction, config.seed + 1)
    pool = train_part.subset(pool_local, name=raw.name)
    selection = train_part.subset(selection_local, name=f"{raw.name}-selection")
    test = raw.subset(test_idx, name=f"{raw.name}-test")
    folds = kfold(pool, config.cv_k, config.seed)
    bundle = DatasetBundle(name=raw.name, pool=pool, selection=selection, test=test, folds=folds)

    _write_json(home / raw.name / "data" / "splits.json", {
        "source": source if source == SYNTH_SOURCE else os.path.basename(source),
        "describe": raw.describe(),
        "test": test_idx.tolist(),
        "selection": train_idx[selection_local].tolist(),
        "pool": train_idx[pool_local].tolist(),
        "folds": folds.to_dict(),
        "selection_labels": selection.labels.tolist(),
        "test_labels": test.labels.tolist(),
    })
    log_event(logger, "dataset_ready", dataset=raw.name, pool=len(pool), selection=len(selection), test=len(test))
    return bundle


def read_labels(dataset_dir: Path) -> Tuple[np.ndarray, np.ndarray]:
    raw = read_json(dataset_dir / "data" / "splits.json")
    return np.asarray(raw["selection_labels"], dtype=np.int64), np.asarray(raw["test_labels"], dtype=np.int64)


# ---------------------------
# Pretraining sources for hft / fft
# ---------------------------

def pretrain_source(family: str, config: PipelineConfig, home: Path) -> Path:
    """
    Best checkpoint of a short tfs run on a synthetic glyph set of the same
    input shape, unless a directory of `<family>.ckpt` files is configured.
    """
    if config.pretrain.checkpoints:
        path = Path(config.pretrain.checkpoints) / f"{family}.ckpt"
        if not path.exists():
            raise ConfigError(f"no pretrained checkpoint for {family} at {path}", details={"family": family})
        return path

    settings = config.pretrain
    shape = config.input_shape
    spec = resolve_spec(family, config.model.preset, config.model.width, shape, settings.classes)
    train = TrainConfig(epochs=settings.epochs, batch_size=config.train.batch_size, seed=settings.seed)
    stage_dir = home / "pretrain" / family
    stage = Stage("pretrain", stage_dir, {
        "spec": spec_digest(spec),
        "pretrain": settings.__dict__,
        "preprocess": config.preprocess.to_dict(),
        "train": train.to_dict(),
    })
    if stage.fresh():
        return stage_dir / stage.data["checkpoint"]

    synth = synth_glyphs(settings.classes, settings.per_class, config.dataset.height, config.dataset.width,
                         seed=settings.seed, name="pretrain")
    data = preprocess(synth, config.preprocess)
    folds = kfold(data, config.cv_k, settings.seed)
    record = train_run(spec, data, folds, 0, train, runs_dir=stage_dir / "runs", run_id=f"pretrain-{family}")
    checkpoint = record.best_checkpoint
    stage.complete([checkpoint], {"checkpoint": os.path.relpath(checkpoint, stage_dir),
                                  "val_acc": record.best_val_acc})
    return checkpoint


# ---------------------------
# Matrix entries
# ---------------------------

@dataclass
class MatrixEntry:
    dataset: str
    family: str
    strategy: str
    status: str = "pending"
    error: Optional[Dict[str, Any]] = None
    data: Dict[str, Any] = field(default_factory=dict)

    @property
    def key(self) -> str:
        return f"{self.family}-{self.strategy}"

    def to_dict(self) -> Dict[str, Any]:
        return {"dataset": self.dataset, "family": self.family, "strategy": self.strategy,
                "status": self.status, "error": self.error}


@dataclass
class ExperimentMatrix:
    entries: List[MatrixEntry]

    @classmethod
    def build(cls, datasets: Sequence[str], families: Sequence[str], strategies: Sequence[str]) -> "ExperimentMatrix":
        return cls([MatrixEntry(d, f, s) for d in datasets for f in families for s in strategies])

    def for_dataset(self, name: str) -> List[MatrixEntry]:
        return [e for e in self.entries if e.dataset == name]

    def counts(self) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for entry in self.entries:
            out[entry.status] = out.get(entry.status, 0) + 1
        return out


def entry_dir(home: Path, dataset: str, family: str, strategy: str) -> Path:
    return home / dataset / "entries" / f"{family}-{strategy}"


def entry_spec(bundle: DatasetBundle, family: str, config: PipelineConfig) -> ModelSpec:
    return resolve_spec(family, config.model.preset, config.model.width, bundle.input_shape, bundle.num_classes)


def tune_entry(
    bundle: DatasetBundle,
    spec: ModelSpec,
    train: TrainConfig,
    config: PipelineConfig,
    directory: Path,
) -> Tuple[TrainConfig, Dict[str, Any]]:
    """
    Hyperband on fold 0 of the pool; the winner's config and epochs replace the base.
    """
    objective = TrainingObjective(spec, bundle.pool, bundle.folds, train, directory / "trials")
    result = run_hyperband(
        config.hpo.space,
        objective,
        R=config.hpo.max_resource,
        eta=config.hpo.eta,
        seed=config.seed,
        parallelism=config.jobs,
    )
    report = tuning_report(result, config.hpo.space, seed=config.seed, run_id=directory.name)
    write_tuning_report(directory / "tuning.json", report)
    if result.best is None:
        raise TrainingFailed("every tuning trial failed", details={"entry": directory.name})
    return objective.train_config(result.best.config, result.best.epochs), {
        "best_trial": result.best.trial_id,
        "score": result.best.score,
        "config": result.best.config,
    }


def run_entry(
    bundle: DatasetBundle,
    family: str,
    strategy: str,
    config: PipelineConfig,
    home: Path,
    source: Optional[Path] = None,
    *,
    jobs: int = 1,
) -> Dict[str, Any]:
    directory = entry_dir(home, bundle.name, family, strategy)
    spec = entry_spec(bundle, family, config)
    train = replace(config.train, strategy=strategy, source_checkpoint=str(source) if source else None).validate()
    stage = Stage("entry", directory, {
        "dataset": bundle.digest(),
        "spec": spec_digest(spec),
        "train": {**train.to_dict(), "source_checkpoint": file_digest(source) if source else None},
        "hpo": config.to_dict()["hpo"],
        "seed": config.seed,
    })
    if stage.fresh():
        return stage.data

    tuning: Dict[str, Any] = {}
    outputs: List[Path] = []
    if config.hpo.enabled:
        train, tuning = tune_entry(bundle, spec, train, config, directory)
        outputs.append(directory / "tuning.json")

    cv = run_folds(spec, bundle.pool, train, runs_dir=directory / "runs", k=config.cv_k,
                   folds=bundle.folds, jobs=jobs)
    model = load_best(cv.best)
    test_metrics, test_matrix = evaluate(model, bundle.test)
    selection_metrics, selection_matrix = evaluate(model, bundle.selection)
    outputs += [test_matrix.write(directory / "test.txt"), selection_matrix.write(directory / "val.txt")]
    checkpoint = cv.best.best_checkpoint
    outputs.append(checkpoint)

    data = {
        "dataset": bundle.name,
        "family": family,
        "strategy": strategy,
        "run_id": cv.best.run_id,
        "fold": cv.best.fold,
        "best_epoch": cv.best.best_epoch,
        "cv_val_acc": cv.best.best_val_acc,
        "val_score": selection_metrics.accuracy,
        "test": test_metrics.to_dict(),
        "checkpoint": os.path.relpath(checkpoint, directory),
        "folds_completed": len(cv.records),
        "folds_failed": cv.failures,
        "train": {**train.to_dict(), "source_checkpoint": os.path.relpath(source, home) if source else None},
        "tuning": tuning,
    }
    outputs.append(_write_json(directory / "entry.json", data))
    stage.complete(outputs, data)
    log_event(logger, "entry_done", dataset=bundle.name, family=family, strategy=strategy,
              test_acc=test_metrics.accuracy, val_score=selection_metrics.accuracy)
    return data


def member_from_entry(directory: Path, data: Dict[str, Any]) -> MemberRecord:
    return MemberRecord(
        dataset=data["dataset"],
        family=data["family"],
        strategy=data["strategy"],
        run_id=data["run_id"],
        test=ProbabilityMatrix.read(directory / "test.txt"),
        validation=ProbabilityMatrix.read(directory / "val.txt"),
        val_score=float(data["val_score"]),
    )


# ---------------------------
# Ensembles
# ---------------------------

def ensemble_stage(dataset_dir: Path, config: PipelineConfig) -> Dict[str, Any]:
    """
    Evaluates every combination mode under every voting rule. Best-Ens is
    searched separately per voting rule on the shared selection split.
    """
    manifest = dataset_dir / "members.json"
    members = read_manifest(manifest)
    if not members:
        raise EnsembleError(f"no members to ensemble under {dataset_dir}")
    selection_labels, test_labels = read_labels(dataset_dir)
    matrix_files = sorted(p for p in dataset_dir.glob("entries/*/*.txt"))
    stage = Stage("ensemble", dataset_dir / "ensembles", {
        "members": [m.describe() for m in members],
        "matrices": [file_digest(p) for p in matrix_files],
        "labels": json_digest([selection_labels.tolist(), test_labels.tolist()]),
        "ensemble": config.to_dict()["ensemble"],
    })
    if stage.fresh():
        return read_json(dataset_dir / "ensembles.json")

    rows: List[Dict[str, Any]] = []
    for mode in config.ensemble.modes:
        if mode == "best":
            row: Dict[str, Any] = {"name": "Best-Ens", "mode": mode, "members": {}, "metrics": {}}
            for voting in config.ensemble.voting:
                (combo,) = enumerate_combinations(members, mode, voting=voting, val_labels=selection_labels,
                                                  min_size=min(config.ensemble.min_size, len(members)))
                row["members"][voting] = list(combo.member_ids)
                row["metrics"][voting] = evaluate_combination(combo, voting, test_labels).to_dict()
            rows.append(row)
            continue
        for combo in enumerate_combinations(members, mode):
            rows.append({
                "name": combo.name,
                "mode": mode,
                "members": {v: list(combo.member_ids) for v in config.ensemble.voting},
                "metrics": {v: evaluate_combination(combo, v, test_labels).to_dict() for v in config.ensemble.voting},
            })
    payload = {
        "dataset": members[0].dataset,
        "voting": list(config.ensemble.voting),
        "members": [m.describe() for m in members],
        "combinations": rows,
    }
    path = _write_json(dataset_dir / "ensembles.json", payload)
    stage.complete([path], {"combinations": len(rows)})
    log_event(logger, "ensemble_done", dataset=payload["dataset"], combinations=len(rows), members=len(members))
    return payload


# ---------------------------
# Benchmarks
# ---------------------------

def bench_stage(dataset_dir: Path, config: PipelineConfig) -> Dict[str, Any]:
    """
    Every member standalone, then the All-Ens ensemble under soft voting.
    Runs serially.
    """
    entries = completed_entries(dataset_dir)
    if not entries:
        raise TrainingFailed(f"no completed entries to benchmark under {dataset_dir}")
    checkpoints = [(data["run_id"], directory / data["checkpoint"]) for directory, data in entries]
    stage = Stage("bench", dataset_dir / "bench", {
        "checkpoints": [file_digest(path) for _, path in checkpoints],
        "bench": config.bench.config.to_dict(),
    })
    if stage.fresh():
        return read_json(dataset_dir / "bench.json")

    def loader(path: Path):
        return lambda: load_model(path)

    reports = [bench_model(member_id, loader(path), config.bench.config) for member_id, path in checkpoints]
    ensemble = bench_ensemble([(m, loader(p)) for m, p in checkpoints], "soft", config.bench.config,
                              subject="All-Ens")
    payload = {"reports": [r.to_dict() for r in reports] + [ensemble.to_dict()]}
    path = _write_json(dataset_dir / "bench.json", payload)
    stage.complete([path], {"subjects": len(payload["reports"])})
    return payload


# ---------------------------
# Pipeline
# ---------------------------

def _entry_job(
    bundle: DatasetBundle,
    entry: MatrixEntry,
    config: PipelineConfig,
    home: Path,
    sources: Dict[str, Path],
) -> MatrixEntry:
    try:
        source = sources.get(entry.family) if entry.strategy != "tfs" else None
        entry.data = run_entry(bundle, entry.family, entry.strategy, config, home, source)
        entry.status = "completed"
    except FensError as exc:
        entry.status, entry.error = "failed", exc.as_error()
        log_event(logger, "entry_failed", level=logging.WARNING, dataset=entry.dataset, family=entry.family,
                  strategy=entry.strategy, code=exc.code)
    return entry


def run_dataset(source: str, config: PipelineConfig, home: Path, matrix: ExperimentMatrix) -> Dict[str, Any]:
    bundle = prepare_dataset(source, config, home)
    entries = matrix.for_dataset(source)
    for entry in entries:
        entry.dataset = bundle.name

    pool = WorkerPool(config.jobs)
    needs_source = sorted({e.family for e in entries if e.strategy != "tfs"})
    sources: Dict[str, Path] = {}
    for family, outcome in zip(needs_source, pool.map(lambda f: _contain_source(f, config, home), needs_source)):
        if isinstance(outcome, Path):
            sources[family] = outcome
        else:
            for entry in entries:
                if entry.family == family and entry.strategy != "tfs":
                    entry.status, entry.error = "failed", outcome

    runnable = [e for e in entries if e.status == "pending"]
    pool.map(lambda e: _entry_job(bundle, e, config, home, sources), runnable)

    dataset_dir = home / bundle.name
    completed = [e for e in entries if e.status == "completed"]
    out: Dict[str, Any] = {"dataset": bundle.name, "entries": [e.to_dict() for e in entries]}
    if not completed:
        return out
    members = [member_from_entry(entry_dir(home, bundle.name, e.family, e.strategy), e.data) for e in completed]
    write_manifest(dataset_dir / "members.json", members, dataset_dir / "matrices")
    out["ensembles"] = len(ensemble_stage(dataset_dir, config)["combinations"])
    if config.bench.enabled:
        out["bench"] = len(bench_stage(dataset_dir, config)["reports"])
    return out


def _contain_source(family: str, config: PipelineConfig, home: Path):
    try:
        return pretrain_source(family, config, home)
    except FensError as exc:
        log_event(logger, "pretrain_failed", level=logging.WARNING, family=family, code=exc.code)
        return exc.as_error()


def run_pipeline(config: PipelineConfig, home: Path) -> Dict[str, Any]:
    config.validate(need_dataset=True)
    home.mkdir(parents=True, exist_ok=True)
    matrix = ExperimentMatrix.build(config.dataset.sources, config.model.families, config.model.strategies)
    datasets = [run_dataset(source, config, home, matrix) for source in config.dataset.sources]
    reports: List[str] = []
    if any(e.status == "completed" for e in matrix.entries):
        reports = [os.path.relpath(p, home) for p in write_reports(home)]
    counts = matrix.counts()
    return {
        "entries": [e.to_dict() for e in matrix.entries],
        "counts": counts,
        "datasets": datasets,
        "reports": reports,
    }
