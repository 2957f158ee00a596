from __future__ import annotations

import itertools

import numpy as np
import pytest

from fens.core.errors import EnsembleError, LabelError, ParseError
from fens.ensemble import (
    MODES,
    EnsembleSpec,
    MemberRecord,
    ProbabilityMatrix,
    best_ens_search,
    compute_metrics,
    enumerate_combinations,
    evaluate_combination,
    hard_vote,
    normalize_weights,
    read_manifest,
    soft_vote,
    weighted_vote,
    write_manifest,
)
from fens.zoo.model import STRATEGIES
from fens.zoo.spec import FAMILIES

from conftest import random_member

A = np.array([[0.6, 0.3, 0.1]])
B = np.array([[0.2, 0.5, 0.3]])


def _matrices(rng, m, n, c):
    return [rng.dirichlet(np.ones(c), size=n) for _ in range(m)]


# ---------------------------
# Voting
# ---------------------------

def test_soft_vote_tie_goes_to_lowest_class():
    assert soft_vote([A, B]).tolist() == [0]
    assert soft_vote([B]).tolist() == [1]


def test_weighted_vote_examples():
    assert weighted_vote([A, B], [0.75, 0.25]).tolist() == [0]
    assert weighted_vote([A, B], [0.0, 1.0]).tolist() == [1]
    with pytest.raises(EnsembleError):
        weighted_vote([A, B], [1.0])
    with pytest.raises(EnsembleError):
        weighted_vote([A, B], [0.7, 0.7])


def test_hard_vote_majority_and_mean_probability_tie_break():
    c_pick = np.array([[0.2, 0.3, 0.5]])
    assert hard_vote([A, A, B]).tolist() == [0]
    first = np.array([[0.7, 0.3]])
    second = np.array([[0.4, 0.6]])
    # one vote each; class 0 mean 0.55 beats class 1 mean 0.45
    assert hard_vote([first, second]).tolist() == [0]
    # three-way vote tie; class 1 has the highest mean
    assert hard_vote([A, B, c_pick]).tolist() == [1]


def test_shape_mismatch_is_rejected():
    with pytest.raises(EnsembleError):
        soft_vote([A, np.ones((2, 3)) / 3])
    with pytest.raises(EnsembleError):
        soft_vote([])


def _oracle(members, weights):
    n, c = members[0].shape
    out = []
    for i in range(n):
        scores = [sum(w * m[i, k] for w, m in zip(weights, members)) for k in range(c)]
        best = max(scores)
        out.append(next(k for k in range(c) if scores[k] >= best - 1e-12 * max(1.0, abs(best))))
    return out


@pytest.mark.parametrize("seed", range(100))
def test_votes_match_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    m, n, c = int(rng.integers(1, 6)), int(rng.integers(1, 13)), int(rng.integers(2, 7))
    members = _matrices(rng, m, n, c)
    weights = normalize_weights(rng.uniform(0.1, 1.0, size=m))
    assert soft_vote(members).tolist() == _oracle(members, [1.0 / m] * m)
    assert weighted_vote(members, weights).tolist() == _oracle(members, weights)

    expected_hard = []
    for i in range(n):
        votes = np.bincount([int(np.argmax(p[i])) for p in members], minlength=c)
        mean = np.mean([p[i] for p in members], axis=0)
        leaders = [k for k in range(c) if votes[k] == votes.max()]
        top = max(mean[k] for k in leaders)
        expected_hard.append(next(k for k in leaders if mean[k] >= top - 1e-12 * max(1.0, top)))
    assert hard_vote(members).tolist() == expected_hard


@pytest.mark.parametrize("seed", range(100))
def test_uniform_weights_equal_soft_and_order_does_not_matter(seed):
    rng = np.random.default_rng(seed)
    m, n, c = int(rng.integers(1, 6)), int(rng.integers(1, 11)), int(rng.integers(2, 6))
    members = _matrices(rng, m, n, c)
    soft = soft_vote(members)
    np.testing.assert_array_equal(weighted_vote(members, np.full(m, 1.0 / m)), soft)
    np.testing.assert_array_equal(soft_vote(members[::-1]), soft)
    np.testing.assert_array_equal(soft_vote([3.0 * p for p in members]), soft)


def test_identical_members_make_every_rule_agree(rng):
    member = rng.dirichlet(np.ones(5), size=40)
    members = [member] * 3
    expected = np.argmax(member, axis=1)
    for predictions in (soft_vote(members), hard_vote(members), weighted_vote(members, [0.2, 0.3, 0.5])):
        np.testing.assert_array_equal(predictions, expected)


def test_normalize_weights():
    np.testing.assert_allclose(normalize_weights([0.9, 0.6]), [0.6, 0.4])
    np.testing.assert_allclose(normalize_weights([0.5] * 3), [1 / 3] * 3)
    np.testing.assert_allclose(normalize_weights([1.0]), [1.0])
    with pytest.raises(EnsembleError):
        normalize_weights([0.0, 0.0])
    with pytest.raises(EnsembleError):
        normalize_weights([-0.1, 0.5])


def test_ensemble_spec_invariants():
    EnsembleSpec(("a", "b"), "weighted", (0.25, 0.75))
    with pytest.raises(EnsembleError):
        EnsembleSpec(("a",), "soft", (1.0,))
    with pytest.raises(EnsembleError):
        EnsembleSpec(("a", "b"), "weighted")
    with pytest.raises(EnsembleError):
        EnsembleSpec((), "hard")
    with pytest.raises(EnsembleError):
        EnsembleSpec(("a",), "median")


# ---------------------------
# Metrics
# ---------------------------

def test_metrics_hand_example():
    row = compute_metrics(np.array([0, 1, 1, 1]), np.array([0, 0, 1, 1]), 2)
    assert row.accuracy == pytest.approx(0.75)
    assert row.precision == pytest.approx((1.0 + 2 / 3) / 2)
    assert row.recall == pytest.approx(0.75)
    assert row.f1 == pytest.approx((2 / 3 + 0.8) / 2)
    assert row.f1 == pytest.approx(0.7333, abs=1e-4)


def test_metrics_perfect_and_absent_class():
    labels = np.array([0, 1, 0, 1])
    assert compute_metrics(labels, labels, 2).to_dict() == {"accuracy": 1.0, "f1": 1.0, "precision": 1.0, "recall": 1.0}
    # class 2 never appears: it drags the macro means down to 2/3
    row = compute_metrics(labels, labels, 3)
    assert row.accuracy == 1.0
    assert row.f1 == pytest.approx(2 / 3)


@pytest.mark.parametrize("seed", range(100))
def test_metrics_match_confusion_matrix(seed):
    rng = np.random.default_rng(seed)
    n, c = int(rng.integers(1, 41)), int(rng.integers(2, 7))
    labels, preds = rng.integers(0, c, size=n), rng.integers(0, c, size=n)
    confusion = np.zeros((c, c))
    for t, p in zip(labels, preds):
        confusion[t, p] += 1
    precision, recall, f1 = [], [], []
    for k in range(c):
        tp = confusion[k, k]
        p = tp / confusion[:, k].sum() if confusion[:, k].sum() else 0.0
        r = tp / confusion[k].sum() if confusion[k].sum() else 0.0
        precision.append(p)
        recall.append(r)
        f1.append(2 * p * r / (p + r) if p + r else 0.0)
    row = compute_metrics(preds, labels, c)
    assert row.accuracy == pytest.approx(np.trace(confusion) / n)
    assert row.precision == pytest.approx(np.mean(precision))
    assert row.recall == pytest.approx(np.mean(recall))
    assert row.f1 == pytest.approx(np.mean(f1))


def test_metrics_errors():
    with pytest.raises(EnsembleError):
        compute_metrics(np.array([0, 1]), np.array([0]), 2)
    with pytest.raises(LabelError):
        compute_metrics(np.array([0, 2]), np.array([0, 1]), 2)


# ---------------------------
# Combinations and Best-Ens
# ---------------------------

def _pool(rng, n=30, c=4):
    pool = []
    for family, strategy in itertools.product(FAMILIES, STRATEGIES):
        pool.append(random_member(rng, n, c, family=family, strategy=strategy,
                                  run_id=f"toy-{family}-{strategy}", val_score=float(rng.uniform(0.2, 0.9))))
    return pool


def test_full_pool_gives_nine_combination_rows(rng):
    pool = _pool(rng)
    labels = rng.integers(0, 4, size=30)
    names = []
    for mode in MODES:
        kwargs = {"voting": "soft", "val_labels": labels} if mode == "best" else {}
        names.extend(c.name for c in enumerate_combinations(pool, mode, **kwargs))
    assert names[:4] == ["All-Ens", "TFS-Ens", "HFT-Ens", "FFT-Ens"]
    assert names[4:8] == [f"{family}-Ens" for family in FAMILIES]
    assert names[-1] == "Best-Ens"
    assert len(names) == 9
    sizes = {c.name: len(c.members) for c in enumerate_combinations(pool, "per-strategy")}
    assert set(sizes.values()) == {4}
    assert all(len(c.members) == 3 for c in enumerate_combinations(pool, "per-model"))


def test_combination_pool_checks(rng):
    with pytest.raises(EnsembleError):
        enumerate_combinations([], "all")
    pool = _pool(rng)[:2]
    with pytest.raises(EnsembleError):
        enumerate_combinations(pool, "median")
    with pytest.raises(EnsembleError):
        enumerate_combinations(pool, "best")
    other = random_member(rng, 30, 5, run_id="wide")
    with pytest.raises(EnsembleError):
        enumerate_combinations(pool + [other], "all")


def test_perfect_member_is_chosen_alone(rng):
    labels = rng.integers(0, 3, size=25)
    perfect = MemberRecord(
        dataset="toy", family="mobile", strategy="tfs", run_id="z-perfect",
        test=ProbabilityMatrix(np.eye(3)[labels]), validation=ProbabilityMatrix(np.eye(3)[labels]), val_score=1.0,
    )
    pool = [random_member(rng, 25, 3, run_id=f"m{i}") for i in range(3)] + [perfect]
    for voting in ("soft", "hard", "weighted"):
        spec = best_ens_search(pool, voting, labels)
        assert spec.members == ("z-perfect",)


def _brute_force(pool, voting, labels, min_size):
    ordered = sorted(pool, key=lambda m: m.member_id)
    candidates = []
    for size in range(min_size, len(ordered) + 1):
        for subset in itertools.combinations(ordered, size):
            matrices = [m.validation.values for m in subset]
            if voting == "soft":
                preds = soft_vote(matrices)
            elif voting == "hard":
                preds = hard_vote(matrices)
            else:
                preds = weighted_vote(matrices, normalize_weights([m.val_score for m in subset]))
            score = float(np.mean(preds == labels))
            candidates.append((-score, size, tuple(m.member_id for m in subset)))
    return min(candidates)[2]


@pytest.mark.parametrize("voting", ["soft", "hard", "weighted"])
@pytest.mark.parametrize("seed", range(60))
def test_best_ens_matches_brute_force(voting, seed):
    rng = np.random.default_rng(seed)
    size = int(rng.integers(1, 7))
    min_size = min(int(rng.integers(1, 4)), size)
    pool = [random_member(rng, 12, 3, run_id=f"m{i}", val_score=float(rng.uniform(0.1, 1.0))) for i in range(size)]
    labels = rng.integers(0, 3, size=12)
    spec = best_ens_search(pool, voting, labels, min_size)
    assert spec.members == _brute_force(pool, voting, labels, min_size)
    if min_size == 1 and voting != "weighted":
        rule = soft_vote if voting == "soft" else hard_vote
        chosen = [m.validation for m in pool if m.member_id in spec.members]
        best_single = max(float(np.mean(np.argmax(m.validation.values, axis=1) == labels)) for m in pool)
        assert float(np.mean(rule(chosen) == labels)) >= best_single


def test_best_ens_rejects_bad_min_size(rng):
    pool = _pool(rng)[:3]
    with pytest.raises(EnsembleError):
        best_ens_search(pool, "soft", rng.integers(0, 4, size=30), min_size=4)


def test_greedy_search_for_large_pools(rng):
    pool = [random_member(rng, 20, 3, run_id=f"m{i:02d}", val_score=0.5) for i in range(6)]
    labels = rng.integers(0, 3, size=20)
    spec = best_ens_search(pool, "soft", labels, min_size=2, exhaustive_limit=3)
    assert len(spec.members) >= 2
    assert list(spec.members) == sorted(spec.members)


def test_best_ens_never_reads_test_matrices(rng):
    pool = [random_member(rng, 15, 3, run_id=f"m{i}") for i in range(4)]
    labels = rng.integers(0, 3, size=15)
    scrambled = [
        MemberRecord(m.dataset, m.family, m.strategy, m.run_id, ProbabilityMatrix(np.full((15, 3), 1 / 3)),
                     m.validation, m.val_score)
        for m in pool
    ]
    assert best_ens_search(pool, "soft", labels).members == best_ens_search(scrambled, "soft", labels).members


def test_evaluate_combination_scores_test_matrices(rng):
    labels = rng.integers(0, 3, size=10)
    member = MemberRecord(
        dataset="toy", family="mnas", strategy="fft", run_id="exact",
        test=ProbabilityMatrix(np.eye(3)[labels]), validation=ProbabilityMatrix(np.full((4, 3), 1 / 3)), val_score=0.4,
    )
    (combo,) = enumerate_combinations([member], "all")
    assert evaluate_combination(combo, "hard", labels).accuracy == 1.0


# ---------------------------
# Files
# ---------------------------

def test_matrix_file_rejects_bad_rows(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("2 2\n0.5 0.5\n0.9 0.3\n", encoding="utf-8")
    with pytest.raises(EnsembleError):
        ProbabilityMatrix.read(path)
    path.write_text("3 2\n0.5 0.5\n", encoding="utf-8")
    with pytest.raises(ParseError):
        ProbabilityMatrix.read(path)
    path.write_text("1 2\n0.5 x\n", encoding="utf-8")
    with pytest.raises(ParseError):
        ProbabilityMatrix.read(path)


def test_manifest_round_trip(rng, tmp_path):
    pool = _pool(rng, n=6, c=3)[:3]
    manifest = write_manifest(tmp_path / "members.json", pool, tmp_path / "matrices")
    again = read_manifest(manifest)
    assert [m.describe() for m in again] == [m.describe() for m in pool]
    for before, after in zip(pool, again):
        np.testing.assert_array_equal(before.test.values, after.test.values)
