from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from fens.core.errors import CheckpointError, ConfigError, DimensionError, SpecError, TrainingFailed
from fens.data.splits import kfold
from fens.training.checkpoint import load_checkpoint, save_checkpoint
from fens.training.config import TrainConfig
from fens.training.engine import (
    apply_strategy,
    checkpoint_name,
    cross_validate,
    evaluate,
    load_best,
    load_model,
    make_run_id,
    run_folds,
    select_best,
    train_run,
)
from fens.training.record import EpochRow, RunRecord
from fens.zoo.model import build_model, classifier_parameters
from fens.zoo.spec import resolve_spec


@pytest.fixture
def spec(glyphs):
    return resolve_spec("mobile", "micro", 1.0, glyphs.image_shape, glyphs.num_classes)


@pytest.fixture
def folds(glyphs):
    return kfold(glyphs, 3, seed=0)


def _config(**changes) -> TrainConfig:
    return TrainConfig(epochs=2, batch_size=8, lr=3e-3, seed=4).with_overrides(**changes)


def _arrays(model):
    return {name: p.data.copy() for name, p in model.named_parameters()}


# ---------------------------
# Checkpoints
# ---------------------------

def test_checkpoint_round_trip_is_bit_identical(tmp_path):
    model = build_model("shuffle", "micro", seed=2)
    path = save_checkpoint(model, {"epoch": 1}, tmp_path / "m.ckpt")
    again = load_model(path)
    for name, array in _arrays(model).items():
        restored = dict(again.named_parameters())[name].data
        assert restored.dtype == array.dtype
        np.testing.assert_array_equal(restored, array)
    assert load_checkpoint(path).meta["epoch"] == 1


@pytest.mark.parametrize("cut", [3, 20, -1])
def test_truncated_checkpoint_is_detected(tmp_path, cut):
    path = save_checkpoint(build_model("mnas", "micro"), {"epoch": 1}, tmp_path / "m.ckpt")
    blob = path.read_bytes()
    path.write_bytes(blob[:cut] if cut > 0 else blob[:cut - 7])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_foreign_file_is_not_a_checkpoint(tmp_path):
    path = tmp_path / "x.ckpt"
    path.write_bytes(b"NOPE" + b"\0" * 32)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.ckpt")


def test_restore_into_other_family_fails(tmp_path):
    path = save_checkpoint(build_model("mnas", "micro"), {}, tmp_path / "m.ckpt")
    with pytest.raises(CheckpointError):
        load_checkpoint(path).restore_into(build_model("squeeze", "micro"))


# ---------------------------
# Config
# ---------------------------

def test_train_config_rules():
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0).validate()
    with pytest.raises(ConfigError):
        TrainConfig(strategy="hft").validate()
    with pytest.raises(ConfigError):
        TrainConfig(strategy="tfs", source_checkpoint="a.ckpt").validate()
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"epochs": 2, "colour": "red"})
    assert TrainConfig.from_dict(TrainConfig().to_dict()) == TrainConfig()


def test_run_id_and_checkpoint_names():
    assert make_run_id("synth", "mobile", "hft", 2, 7) == "synth-mobile-hft-fold2-7"
    assert checkpoint_name(3) == "epoch_003.ckpt"


# ---------------------------
# Runs
# ---------------------------

def test_train_run_writes_one_checkpoint_per_epoch(glyphs, spec, folds, tmp_path):
    record = train_run(spec, glyphs, folds, 0, _config(), runs_dir=tmp_path)
    assert record.ok
    assert [row.epoch for row in record.rows] == [1, 2]
    assert record.checkpoints == ["epoch_001.ckpt", "epoch_002.ckpt"]
    assert all(record.checkpoint_path(i).is_file() for i in range(2))
    reread = RunRecord.read(tmp_path / record.run_id / "record.json")
    assert reread.best_checkpoint == record.best_checkpoint
    metrics, matrix = evaluate(load_best(record), glyphs)
    assert matrix.n == len(glyphs) and matrix.c == glyphs.num_classes
    assert 0.0 <= metrics.accuracy <= 1.0


def test_resume_matches_uninterrupted_run(glyphs, spec, folds, tmp_path):
    full = train_run(spec, glyphs, folds, 1, _config(epochs=3), runs_dir=tmp_path / "full")
    first = train_run(spec, glyphs, folds, 1, _config(epochs=2), runs_dir=tmp_path / "part")
    resumed = train_run(spec, glyphs, folds, 1, _config(epochs=3), runs_dir=tmp_path / "part",
                        resume_from=first.checkpoint_path(-1))
    assert [r.metrics() for r in resumed.rows] == [r.metrics() for r in full.rows]
    a = load_checkpoint(full.checkpoint_path(-1)).tensors
    b = load_checkpoint(resumed.checkpoint_path(-1)).tensors
    assert a.keys() == b.keys()
    for name in a:
        np.testing.assert_array_equal(a[name], b[name])


def test_resume_rejects_other_spec(glyphs, spec, folds, tmp_path):
    record = train_run(spec, glyphs, folds, 0, _config(epochs=1), runs_dir=tmp_path)
    other = resolve_spec("mobile", "micro", 2.0, glyphs.image_shape, glyphs.num_classes)
    with pytest.raises(CheckpointError):
        train_run(other, glyphs, folds, 0, _config(), runs_dir=tmp_path, run_id="other",
                  resume_from=record.checkpoint_path(0))


def test_hft_leaves_features_bit_identical(glyphs, spec, folds, tmp_path):
    source = train_run(spec, glyphs, folds, 0, _config(epochs=1), runs_dir=tmp_path / "src")
    config = _config(epochs=2, strategy="hft", source_checkpoint=str(source.checkpoint_path(0)))
    tuned = train_run(spec, glyphs, folds, 0, config, runs_dir=tmp_path / "hft")
    before = load_checkpoint(source.checkpoint_path(0)).tensors
    after = load_checkpoint(tuned.checkpoint_path(-1)).tensors
    model = load_model(tuned.checkpoint_path(-1))
    head = set(classifier_parameters(model))
    changed = set()
    for name, _ in model.named_parameters():
        if name in head:
            if not np.array_equal(before[name], after[name]):
                changed.add(name)
        else:
            np.testing.assert_array_equal(before[name], after[name])
    for name, _ in model.named_buffers():
        np.testing.assert_array_equal(before[name], after[name])
    assert changed and changed <= head


def test_recorded_source_checkpoint_is_relative_to_the_run(glyphs, spec, folds, tmp_path):
    source = train_run(spec, glyphs, folds, 0, _config(epochs=1), runs_dir=tmp_path / "src")
    config = _config(epochs=1, strategy="fft", source_checkpoint=str(source.checkpoint_path(0)))
    tuned = train_run(spec, glyphs, folds, 0, config, runs_dir=tmp_path / "fft")
    run_dir = tmp_path / "fft" / tuned.run_id
    recorded = tuned.config["source_checkpoint"]
    assert not Path(recorded).is_absolute()
    assert (run_dir / recorded).resolve() == source.checkpoint_path(0).resolve()
    assert load_checkpoint(tuned.checkpoint_path(0)).meta["train"]["source_checkpoint"] == recorded
    for name in ("config.json", "record.json"):
        assert str(tmp_path) not in (run_dir / name).read_text(encoding="utf-8")


def test_fft_starts_from_source_weights(glyphs, spec, folds, tmp_path):
    source = train_run(spec, glyphs, folds, 0, _config(epochs=1), runs_dir=tmp_path)
    ckpt = load_checkpoint(source.checkpoint_path(0))
    model = apply_strategy(spec, "fft", ckpt, seed=99)
    for name, param in model.named_parameters():
        np.testing.assert_array_equal(param.data, ckpt.tensors[name])
        assert param.trainable


def test_hft_reinitialises_head_for_new_class_count(glyphs, spec, folds, tmp_path):
    source = train_run(spec, glyphs, folds, 0, _config(epochs=1), runs_dir=tmp_path)
    ckpt = load_checkpoint(source.checkpoint_path(0))
    wider = resolve_spec("mobile", "micro", 1.0, glyphs.image_shape, 7)
    model = apply_strategy(wider, "hft", ckpt)
    assert model.spec.num_classes == 7
    with pytest.raises(SpecError):
        apply_strategy(resolve_spec("mnas", "micro", 1.0, glyphs.image_shape, 4), "hft", ckpt)


def test_mismatched_dataset_shape_is_rejected(glyphs, folds, tmp_path):
    wrong = resolve_spec("mobile", "micro", 1.0, (1, 32, 32), glyphs.num_classes)
    with pytest.raises(DimensionError):
        evaluate(build_model("mobile", "micro", input_shape=(1, 32, 32), num_classes=4), glyphs)
    with pytest.raises(DimensionError):
        train_run(wrong, glyphs, folds, 0, _config(epochs=1), runs_dir=tmp_path)


# ---------------------------
# Cross-validation
# ---------------------------

def _stub_record(fold: int, accs) -> RunRecord:
    rows = [EpochRow(i + 1, 1.0, 0.5, 1.0, acc, 0.0) for i, acc in enumerate(accs)]
    return RunRecord(run_id=f"stub-fold{fold}", config={}, fold=fold, rows=rows,
                     checkpoints=[f"epoch_{i + 1:03d}.ckpt" for i in range(len(accs))], status="completed")


def test_best_epoch_prefers_earliest_tie():
    record = _stub_record(0, [0.4, 0.7, 0.7, 0.6])
    assert record.best_epoch == 2
    assert record.best_checkpoint.name == "epoch_002.ckpt"


def test_run_folds_picks_best_fold_and_contains_failures(glyphs, spec, tmp_path):
    scripted = {0: [0.5, 0.8], 1: [0.8, 0.6], 2: None, 3: [0.7, 0.7], 4: [0.1, 0.2]}

    def runner(spec, dataset, folds, fold, config, *, runs_dir):
        if scripted[fold] is None:
            raise TrainingFailed("scripted failure")
        return _stub_record(fold, scripted[fold])

    result = run_folds(spec, glyphs, _config(), runs_dir=tmp_path, k=5, jobs=2, runner=runner)
    assert result.best.fold == 0
    assert [r.fold for r in result.records] == [0, 1, 3, 4]
    assert [f["fold"] for f in result.failures] == [2]


def test_cross_validate_returns_the_best_fold_record(glyphs, spec, tmp_path):
    scripted = {0: [0.3, 0.4], 1: [0.6, 0.9], 2: [0.7, 0.5]}
    seen = []

    def runner(spec, dataset, folds, fold, config, *, runs_dir):
        seen.append(fold)
        return _stub_record(fold, scripted[fold])

    best = cross_validate(spec, glyphs, 3, _config(), runs_dir=tmp_path, runner=runner)
    assert sorted(seen) == [0, 1, 2]
    assert best.fold == 1
    assert best.best_epoch == 2


def test_select_best_needs_a_usable_run():
    with pytest.raises(TrainingFailed):
        select_best([RunRecord(run_id="empty", config={})])
