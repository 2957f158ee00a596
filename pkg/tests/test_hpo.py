from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from fens.core.errors import ConfigError, TrialFailed
from fens.core.rng import stream
from fens.data.splits import kfold
from fens.hpo import (
    SearchSpace,
    TrainingObjective,
    hyperband_schedule,
    read_tuning_report,
    run_hyperband,
    sample_config,
    tuning_report,
    write_tuning_report,
)
from fens.training.config import TrainConfig
from fens.zoo.spec import resolve_spec


def _score(config, epochs, resume=None):
    # peaks near lr = 3e-3 and improves with budget
    return -abs(math.log10(config["lr"]) + 2.5) + 0.01 * epochs


def _bad_batch(config, epochs, resume=None):
    if config["batch_size"] == 64:
        raise TrialFailed("out of memory at batch 64")
    return _score(config, epochs)


# ---------------------------
# Schedule
# ---------------------------

@pytest.mark.parametrize(
    "R, eta, ns, rs",
    [
        (81, 3, [81, 34, 15, 8, 5], [1, 3, 9, 27, 81]),
        (27, 3, [27, 12, 6, 4], [1, 3, 9, 27]),
        (16, 2, [16, 10, 7, 5, 5], [1, 2, 4, 8, 16]),
        (9, 3, [9, 5, 3], [1, 3, 9]),
        (1, 2, [1], [1]),
    ],
)
def test_schedule_brackets(R, eta, ns, rs):
    plan = hyperband_schedule(R, eta)
    assert plan.s_max == len(ns) - 1
    assert plan.B == (plan.s_max + 1) * R
    assert [b.n for b in plan.brackets] == ns
    assert [b.r for b in plan.brackets] == [Fraction(r) for r in rs]


def test_rungs_shrink_by_eta_and_end_at_full_budget():
    plan = hyperband_schedule(81, 3)
    first = plan.brackets[0]
    assert [r.configs for r in first.rungs] == [81, 27, 9, 3, 1]
    assert [r.epochs for r in first.rungs] == [1, 3, 9, 27, 81]
    for bracket in plan.brackets:
        assert bracket.rungs[-1].resource == 81


def test_fractional_resources_round_down_to_at_least_one_epoch():
    bracket = hyperband_schedule(10, 3).brackets[0]
    assert bracket.r == Fraction(10, 9)
    assert [r.epochs for r in bracket.rungs] == [1, 3, 10]


def test_schedule_rejects_bad_arguments():
    with pytest.raises(ConfigError):
        hyperband_schedule(0, 3)
    with pytest.raises(ConfigError):
        hyperband_schedule(27, 1)


# ---------------------------
# Search space
# ---------------------------

def test_log_uniform_lr_has_geometric_median():
    space = SearchSpace(lr=(1e-4, 1e-1))
    rng = stream(11, "lr-check")
    lrs = np.array([sample_config(space, rng)["lr"] for _ in range(2000)])
    assert lrs.min() >= 1e-4 and lrs.max() <= 1e-1
    assert 2.6e-3 <= float(np.median(lrs)) <= 4.0e-3


def test_sampling_is_seeded():
    space = SearchSpace()
    a = [sample_config(space, stream(3, "hpo", 0)) for _ in range(3)]
    b = [sample_config(space, stream(3, "hpo", 0)) for _ in range(3)]
    assert a == b


def test_space_validation():
    with pytest.raises(ConfigError):
        SearchSpace(lr=(0.0, 1e-2)).validate()
    with pytest.raises(ConfigError):
        SearchSpace(batch_sizes=()).validate()
    with pytest.raises(ConfigError):
        SearchSpace(optimizers=("lbfgs",)).validate()
    with pytest.raises(ConfigError):
        SearchSpace.from_dict({"momentum": [0.5, 1.0]})
    space = SearchSpace.from_dict({"lr": [1e-3, 1e-2], "weight_decay": None})
    assert SearchSpace.from_dict(space.to_dict()) == space


# ---------------------------
# Search
# ---------------------------

def test_hyperband_finds_the_peak_and_promotes_with_resume():
    result = run_hyperband(SearchSpace(), _score, R=9, eta=3, seed=5)
    assert result.best is not None
    assert result.best.score == max(t.score for t in result.trials if t.status == "done")
    promoted = [t for t in result.trials if t.promoted_from is not None]
    assert promoted
    for trial in promoted:
        parent = result.trials[trial.promoted_from]
        assert parent.config == trial.config
        assert parent.rung + 1 == trial.rung


def test_rung_survivors_are_the_top_scores():
    result = run_hyperband(SearchSpace(), _score, R=9, eta=3, seed=1)
    first = [t for t in result.trials if t.bracket == 2 and t.rung == 0]
    second = [t for t in result.trials if t.bracket == 2 and t.rung == 1]
    assert len(first) == 9 and len(second) == 3
    ranked = sorted(first, key=lambda t: (-t.score, t.trial_id))[:3]
    assert [t.trial_id for t in ranked] == [t.promoted_from for t in second]


def test_failed_trials_are_replaced_once():
    space = SearchSpace(batch_sizes=(16, 64))
    result = run_hyperband(space, _bad_batch, R=9, eta=3, seed=2)
    originals = [t for t in result.trials if t.replacement_of is None and t.status == "failed"]
    assert originals
    replaced = {t.replacement_of for t in result.trials if t.replacement_of is not None}
    assert {t.trial_id for t in originals} == replaced
    for t in result.trials:
        if t.replacement_of is not None:
            assert t.epochs == result.trials[t.replacement_of].epochs
            assert t.status in ("done", "failed")
    assert result.best.config["batch_size"] == 16
    assert result.epochs_executed(include_replacements=True) > result.epochs_executed()


def test_failures_can_stay_unreplaced():
    space = SearchSpace(batch_sizes=(64,))
    result = run_hyperband(space, _bad_batch, R=3, eta=3, seed=0, replace_failed=False)
    assert result.best is None
    assert all(t.replacement_of is None for t in result.trials)
    assert all(t.error["code"] for t in result.trials)


def test_parallel_search_equals_serial():
    serial = run_hyperband(SearchSpace(), _bad_batch, R=9, eta=3, seed=7, parallelism=1)
    parallel = run_hyperband(SearchSpace(), _bad_batch, R=9, eta=3, seed=7, parallelism=4)
    assert [t.to_dict() for t in serial.trials] == [t.to_dict() for t in parallel.trials]
    assert serial.best_config == parallel.best_config


def test_tuning_report_round_trip(tmp_path):
    space = SearchSpace(batch_sizes=(16, 64))
    result = run_hyperband(space, _bad_batch, R=3, eta=3, seed=4)
    report = tuning_report(result, space, seed=4, run_id="synth-mobile-tfs")
    path = write_tuning_report(tmp_path / "tuning.json", report)
    again = read_tuning_report(path)
    assert again["best"].trial_id == result.best.trial_id
    assert [t.status for t in again["trials"]] == [t.status for t in result.trials]
    assert again["plan"]["epochs_planned"] == result.plan.epochs_planned()
    assert path.read_text(encoding="utf-8") == write_tuning_report(tmp_path / "b.json", report).read_text(
        encoding="utf-8"
    )


def test_report_version_is_checked(tmp_path):
    path = tmp_path / "tuning.json"
    path.write_text('{"version": 99}', encoding="utf-8")
    with pytest.raises(ConfigError):
        read_tuning_report(path)


# ---------------------------
# Training objective
# ---------------------------

def test_training_objective_resumes_promoted_trials(glyphs, tmp_path):
    spec = resolve_spec("squeeze", "micro", 1.0, glyphs.image_shape, glyphs.num_classes)
    objective = TrainingObjective(
        spec=spec,
        dataset=glyphs,
        folds=kfold(glyphs, 3, seed=0),
        base=TrainConfig(seed=1),
        runs_dir=tmp_path / "trials",
    )
    config = {"lr": 3e-3, "batch_size": 8, "optimizer": "adam", "weight_decay": 0.0, "momentum": 0.9}
    first = objective(config, 1)
    assert 0.0 <= first.score <= 1.0
    second = objective(config, 3, first.checkpoint)
    assert second.details["run_id"] == first.details["run_id"]
    assert second.checkpoint == f"trials/{first.details['run_id']}/epoch_003.ckpt"
    assert (tmp_path / second.checkpoint).is_file()
    assert str(tmp_path) not in first.checkpoint
