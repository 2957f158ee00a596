"""
Learning strategies, per-fold training runs, cross-validation and evaluation.

Run directory layout:
    <runs_dir>/<run_id>/config.json
    <runs_dir>/<run_id>/epoch_NNN.ckpt
    <runs_dir>/<run_id>/record.json
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from fens.core.errors import CheckpointError, DimensionError, FensError, SpecError, TrainingFailed
from fens.core.logs import log_event
from fens.core.queue import WorkerPool, activity_gate
from fens.core.rng import stream, stream_digest
from fens.data.dataset import Dataset
from fens.data.splits import FoldAssignment, kfold
from fens.ensemble.matrix import ProbabilityMatrix
from fens.ensemble.metrics import MetricsRow, compute_metrics
from fens.tensor import functional as F
from fens.tensor.optim import OptimizerState, optimizer_step
from fens.tensor.tensor import Tensor, backward, no_grad
from fens.zoo.model import Model, apply_mask, build_from_spec, classifier_parameters, trainable_mask
from fens.zoo.spec import ModelSpec, spec_digest, spec_from_dict

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import TrainConfig
from .record import EpochRow, RunRecord

logger = logging.getLogger(__name__)

EVAL_BATCH = 256


def make_run_id(dataset: str, family: str, strategy: str, fold: int, seed: int) -> str:
    return f"{dataset}-{family}-{strategy}-fold{fold}-{seed}"


def checkpoint_name(epoch: int) -> str:
    return f"epoch_{epoch:03d}.ckpt"


# ---------------------------
# Strategies
# ---------------------------

def _feature_signature(spec: ModelSpec) -> Dict[str, Any]:
    raw = spec.to_dict()
    return {
        "input_shape": raw["input_shape"],
        "blocks": raw["blocks"],
        "hidden": raw["head"]["hidden"],
        "head": raw["head"]["kind"],
        "boundary": raw["boundary"],
    }


def apply_strategy(
    spec: ModelSpec,
    strategy: str,
    source: Optional[Checkpoint] = None,
    *,
    seed: int = 0,
) -> Model:
    """
    tfs: fresh seeded init, everything trainable.
    hft: load the feature layers from `source` and freeze them; the head is
         loaded too when its class count matches, otherwise re-initialised.
    fft: load every parameter whose shape matches, everything trainable.
    """
    model = build_from_spec(spec, stream(seed, "init"))
    if strategy == "tfs":
        if source is not None:
            raise SpecError("tfs trains from scratch and takes no source checkpoint")
        apply_mask(model, trainable_mask(model, "tfs"))
        return model
    if source is None:
        raise CheckpointError(f"{strategy} needs a source checkpoint")

    source_spec = spec_from_dict(source.meta["spec"])
    if _feature_signature(source_spec) != _feature_signature(spec):
        raise SpecError(
            "source checkpoint's feature extractor does not match the target model",
            details={"source": f"{source_spec.family}-{source_spec.preset}", "target": f"{spec.family}-{spec.preset}"},
        )
    head = set(classifier_parameters(model))
    params = dict(model.named_parameters())
    buffers = dict(model.named_buffers())
    for name, param in params.items():
        stored = source.tensors.get(name)
        if stored is None or stored.shape != param.data.shape:
            if name in head:
                continue
            raise SpecError(f"source checkpoint lacks feature tensor {name}", details={"name": name})
        param.data[...] = stored
    for name, buf in buffers.items():
        stored = source.tensors.get(name)
        if stored is not None and stored.shape == buf.shape:
            buf[...] = stored
    apply_mask(model, trainable_mask(model, strategy))
    return model


# ---------------------------
# Evaluation
# ---------------------------

def predict_proba(model: Model, images: np.ndarray, batch_size: int = EVAL_BATCH) -> np.ndarray:
    model.eval()
    outputs: List[np.ndarray] = []
    with no_grad():
        for start in range(0, images.shape[0], batch_size):
            logits = model(Tensor(images[start:start + batch_size]))
            outputs.append(F.softmax(logits.data.astype(np.float64)))
    if not outputs:
        return np.zeros((0, model.spec.num_classes))
    return np.concatenate(outputs)


def evaluate(model: Model, dataset: Dataset, batch_size: int = EVAL_BATCH) -> Tuple[MetricsRow, ProbabilityMatrix]:
    if dataset.num_classes != model.spec.num_classes:
        raise DimensionError(
            f"model predicts {model.spec.num_classes} classes, dataset has {dataset.num_classes}",
            details={"model": model.spec.num_classes, "dataset": dataset.num_classes},
        )
    if dataset.image_shape != tuple(model.spec.input_shape):
        raise DimensionError(
            f"dataset images {dataset.image_shape} do not match model input {tuple(model.spec.input_shape)}"
        )
    probs = predict_proba(model, dataset.images, batch_size)
    matrix = ProbabilityMatrix(probs)
    metrics = compute_metrics(probs.argmax(axis=1), dataset.labels, dataset.num_classes)
    return metrics, matrix


def _loss_and_accuracy(model: Model, images: np.ndarray, labels: np.ndarray) -> Tuple[float, float]:
    model.eval()
    total_loss, correct = 0.0, 0
    with no_grad():
        for start in range(0, images.shape[0], EVAL_BATCH):
            x = images[start:start + EVAL_BATCH]
            y = labels[start:start + EVAL_BATCH]
            loss, probs = F.softmax_cross_entropy(model(Tensor(x)), y)
            total_loss += float(loss.data) * len(y)
            correct += int((probs.argmax(axis=1) == y).sum())
    n = max(1, images.shape[0])
    return total_loss / n, correct / n


# ---------------------------
# Training
# ---------------------------

def _batches(order: np.ndarray, batch_size: int) -> List[np.ndarray]:
    batches = [order[i:i + batch_size] for i in range(0, order.size, batch_size)]
    # batch statistics need two samples; fold a lone tail into its predecessor
    if len(batches) > 1 and batches[-1].size == 1:
        batches[-2] = np.concatenate([batches[-2], batches.pop()])
    return batches


def _train_epoch(
    model: Model,
    optimizer: OptimizerState,
    images: np.ndarray,
    labels: np.ndarray,
    order: np.ndarray,
    batch_size: int,
) -> Tuple[float, float]:
    model.train()
    params = dict(model.named_parameters())
    total_loss, correct = 0.0, 0
    for batch in _batches(order, batch_size):
        x, y = images[batch], labels[batch]
        loss, probs = F.softmax_cross_entropy(model(Tensor(x)), y)
        model.zero_grad()
        backward(loss)
        optimizer_step(optimizer, params)
        total_loss += float(loss.data) * batch.size
        correct += int((probs.argmax(axis=1) == y).sum())
    return total_loss / order.size, correct / order.size


def _write_json(path: Path, payload: Dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _recorded_config(config: TrainConfig, run_dir: Path) -> Dict[str, Any]:
    # written artifacts name the source checkpoint relative to the run directory
    raw = config.to_dict()
    if config.source_checkpoint:
        raw["source_checkpoint"] = os.path.relpath(config.source_checkpoint, run_dir)
    return raw


def train_run(
    spec: ModelSpec,
    dataset: Dataset,
    folds: FoldAssignment,
    fold: int,
    config: TrainConfig,
    *,
    runs_dir: Path,
    run_id: Optional[str] = None,
    resume_from: Optional[Path] = None,
) -> RunRecord:
    """
    Train on every fold but `fold`, validate on `fold` after each epoch and
    checkpoint every epoch. `resume_from` continues a previous checkpoint of
    the same run up to `config.epochs`.
    """
    config.validate()
    if folds.folds.shape[0] != len(dataset):
        raise DimensionError("fold assignment does not cover the dataset")
    if dataset.image_shape != tuple(spec.input_shape):
        raise DimensionError(
            f"dataset images {dataset.image_shape} do not match model input {tuple(spec.input_shape)}",
            details={"dataset": list(dataset.image_shape), "model": list(spec.input_shape)},
        )
    run_id = run_id or make_run_id(dataset.name, spec.family, config.strategy, fold, config.seed)
    run_dir = Path(runs_dir) / run_id
    train_idx, val_idx = folds.train_indices(fold), folds.val_indices(fold)
    images, labels = dataset.images, dataset.labels

    source = load_checkpoint(Path(config.source_checkpoint)) if config.source_checkpoint else None
    model = apply_strategy(spec, config.strategy, source, seed=config.seed)
    optimizer = config.optimizer_state()
    recorded = _recorded_config(config, run_dir)
    record = RunRecord(run_id=run_id, config=recorded, fold=fold, root=run_dir)

    start_epoch = 0
    if resume_from is not None:
        resumed = load_checkpoint(Path(resume_from))
        if resumed.meta.get("spec_digest") != spec_digest(spec):
            raise CheckpointError("resume checkpoint belongs to a different model spec")
        resumed.restore_into(model)
        resumed.restore_optimizer(optimizer)
        start_epoch = int(resumed.meta["epoch"])
        record.rows = [EpochRow(**row) for row in resumed.meta.get("history", [])]
        record.checkpoints = list(resumed.meta.get("checkpoints", []))

    _write_json(run_dir / "config.json", {
        "run_id": run_id,
        "fold": fold,
        "dataset": dataset.name,
        "dataset_digest": dataset.digest(),
        "spec": spec.to_dict(),
        "train": recorded,
    })

    with activity_gate.training():
        for epoch in range(start_epoch + 1, config.epochs + 1):
            started = time.perf_counter()
            order = train_idx[stream(config.seed, "shuffle", fold, epoch).permutation(train_idx.size)]
            try:
                train_loss, train_acc = _train_epoch(model, optimizer, images, labels, order, config.batch_size)
                val_loss, val_acc = _loss_and_accuracy(model, images[val_idx], labels[val_idx])
            except FensError as exc:
                record.status = "failed"
                record.error = exc.as_error()
                record.write(run_dir / "record.json")
                log_event(logger, "run_failed", level=logging.WARNING, run=run_id, epoch=epoch, code=exc.code)
                raise TrainingFailed(
                    f"run {run_id} failed at epoch {epoch}: {exc.message}",
                    details={"run_id": run_id, "epoch": epoch, "cause": exc.code},
                ) from exc

            row = EpochRow(
                epoch=epoch,
                train_loss=train_loss,
                train_acc=train_acc,
                val_loss=val_loss,
                val_acc=val_acc,
                wall_s=round(time.perf_counter() - started, 6),
            )
            record.rows.append(row)
            path = run_dir / checkpoint_name(epoch)
            record.checkpoints.append(path.name)
            save_checkpoint(
                model,
                {
                    "run_id": run_id,
                    "epoch": epoch,
                    "fold": fold,
                    "seed": config.seed,
                    "spec_digest": spec_digest(spec),
                    "metrics": row.metrics(),
                    "rng_digest": stream_digest(config.seed, "shuffle", fold, epoch),
                    "history": [asdict(r) for r in record.rows],
                    "checkpoints": list(record.checkpoints),
                    "train": recorded,
                },
                path,
                optimizer=optimizer,
            )
            record.write(run_dir / "record.json")
            log_event(
                logger,
                "epoch_done",
                run=run_id,
                epoch=epoch,
                train_loss=train_loss,
                train_acc=train_acc,
                val_loss=val_loss,
                val_acc=val_acc,
            )

    record.status = "completed"
    record.write(run_dir / "record.json")
    return record


# ---------------------------
# Cross-validation
# ---------------------------

Runner = Callable[..., RunRecord]


@dataclass
class CrossValidation:
    best: RunRecord
    records: List[RunRecord]
    failures: List[Dict[str, Any]] = field(default_factory=list)


def select_best(records: Sequence[RunRecord]) -> RunRecord:
    """
    Highest best-epoch validation accuracy; ties go to the lowest fold.
    """
    done = [r for r in records if r.rows]
    if not done:
        raise TrainingFailed("no fold produced a usable run")
    return max(done, key=lambda r: (r.best_val_acc, -r.fold))


def run_folds(
    spec: ModelSpec,
    dataset: Dataset,
    config: TrainConfig,
    *,
    runs_dir: Path,
    k: int = 5,
    folds: Optional[FoldAssignment] = None,
    jobs: int = 1,
    runner: Runner = train_run,
) -> CrossValidation:
    folds = folds or kfold(dataset, k, config.seed)

    def one(fold: int):
        try:
            return runner(spec, dataset, folds, fold, config, runs_dir=runs_dir), None
        except FensError as exc:
            log_event(logger, "fold_failed", level=logging.WARNING, fold=fold, code=exc.code)
            return None, {"fold": fold, **exc.as_error()}

    outcomes = WorkerPool(jobs).map(one, list(range(folds.k)))
    records = [r for r, _ in outcomes if r is not None]
    failures = [e for _, e in outcomes if e is not None]
    if not records:
        raise TrainingFailed(f"all {folds.k} folds failed", details={"failures": failures})
    best = select_best(records)
    log_event(logger, "fold_done", run=best.run_id, fold=best.fold, val_acc=best.best_val_acc,
              completed=len(records), failed=len(failures))
    return CrossValidation(best=best, records=records, failures=failures)


def cross_validate(
    spec: ModelSpec,
    dataset: Dataset,
    k: int = 5,
    config: Optional[TrainConfig] = None,
    *,
    runs_dir: Path,
    folds: Optional[FoldAssignment] = None,
    jobs: int = 1,
    runner: Runner = train_run,
) -> RunRecord:
    result = run_folds(spec, dataset, config or TrainConfig(), runs_dir=runs_dir, k=k,
                       folds=folds, jobs=jobs, runner=runner)
    return result.best


# ---------------------------
# Reloading
# ---------------------------

def load_model(checkpoint: Path) -> Model:
    """
    Rebuild a model from the spec embedded in a checkpoint and restore its tensors.
    """
    ckpt = load_checkpoint(Path(checkpoint))
    spec = spec_from_dict(ckpt.meta["spec"]).validate()
    model = build_from_spec(spec, stream(0, "init"))
    ckpt.restore_into(model)
    return model.eval()


def load_best(record: RunRecord) -> Model:
    return load_model(Path(record.best_checkpoint))
