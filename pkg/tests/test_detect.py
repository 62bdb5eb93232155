import io

import numpy as np
import pytest

from abcnet.detect import (
    BaselineStats,
    FeatureVector,
    TrainingError,
    classify,
    cross_validate,
    feature_label_matrix,
    iqr_anomaly,
    min_sensor_cover,
    stratified_folds,
    train_centroid,
)


def test_identical_runs_have_zero_iqr():
    bl = BaselineStats(np.tile([5.0, 3.0, 8.0], (10, 1)))
    assert np.all(bl.iqr == 0)
    assert bl.top(2).tolist() == [2, 0]
    flags, any_ = iqr_anomaly(bl, FeatureVector.from_estimates([0, 1], np.array([5.0, 3.0, 8.0])))
    assert not any_
    flags, any_ = iqr_anomaly(bl, FeatureVector.from_estimates([0, 1], np.array([5.0, 3.1, 8.0])))
    assert flags.tolist() == [False, True] and any_


def test_fence_boundary_is_not_flagged():
    x = np.array([[1.0], [2.0], [3.0], [4.0], [5.0]])
    bl = BaselineStats(x)
    assert (bl.q1[0], bl.q3[0]) == (2.0, 4.0)
    lo, hi = bl.fences()
    assert (lo[0], hi[0]) == (-1.0, 7.0)
    assert not iqr_anomaly(bl, FeatureVector((0,), np.array([7.0])))[1]
    assert iqr_anomaly(bl, FeatureVector((0,), np.array([7.0001])))[1]


def test_baseline_needs_two_runs_and_known_sensors():
    with pytest.raises(ValueError):
        BaselineStats(np.ones((1, 3)))
    bl = BaselineStats(np.ones((3, 3)))
    with pytest.raises(ValueError):
        iqr_anomaly(bl, FeatureVector((7,), np.array([1.0])))


def test_baseline_round_trip_and_csv():
    bl = BaselineStats(np.random.default_rng(0).random((6, 4)))
    back = BaselineStats.from_json(bl.to_json())
    assert np.array_equal(back.samples, bl.samples)
    assert bl.nodes_at_ranks([1, 2]).tolist() == bl.rank[:2].tolist()
    buf = io.StringIO()
    bl.write_whiskers(buf, k=3)
    assert len(buf.getvalue().splitlines()) == 4


def _blobs(n_per, centers, spread, seed):
    r = np.random.default_rng(seed)
    X = np.concatenate([c + spread * r.standard_normal((n_per, len(c))) for c in centers])
    y = np.repeat(np.arange(len(centers)), n_per)
    return X, y


def test_separable_classes_are_perfect():
    X, y = _blobs(20, [np.zeros(3), np.full(3, 10.0), np.r_[10.0, -10, 0]], 0.5, 1)
    cv = cross_validate(X, y, k=5, seed=0)
    assert cv.accuracy == 1.0
    assert cv.confusion.sum() == len(y)


def test_shuffled_labels_are_at_chance():
    X, y = _blobs(60, [np.zeros(4)] * 4, 1.0, 2)
    y = np.random.default_rng(3).permutation(y)
    assert abs(cross_validate(X, y, k=10, seed=0).accuracy - 0.25) < 0.1


def test_tie_goes_to_smaller_label():
    X = np.array([[-1.0, -1.0], [1.0, 1.0], [0.0, 5.0], [0.0, 5.0], [5.0, 0.0], [5.0, 0.0]])
    model = train_centroid(X, np.array([0, 0, 1, 1, 2, 2]))
    label, dist = classify(model, [5.0, 5.0])
    assert dist[1] == pytest.approx(dist[2]) and dist[0] > dist[1]
    assert label == 1
    # swapping which class sits where does not change the winner
    model = train_centroid(X, np.array([0, 0, 2, 2, 1, 1]))
    assert classify(model, [5.0, 5.0])[0] == 1


def test_scale_invariance():
    X, y = _blobs(15, [np.zeros(3), np.r_[1.0, 2, 0]], 0.7, 4)
    a = cross_validate(X, y, k=5, seed=1)
    b = cross_validate(X * np.array([1000.0, 0.001, 7.0]) + 5.0, y, k=5, seed=1)
    assert np.array_equal(a.predictions, b.predictions)


def test_training_errors():
    with pytest.raises(TrainingError):
        train_centroid(np.ones((4, 2)), np.zeros(4))
    with pytest.raises(TrainingError):
        train_centroid(np.ones((3, 2)), np.array([0, 0, 1]))
    with pytest.raises(TrainingError):
        train_centroid(np.ones((4, 2)), np.array([1, 1, 2, 2]))
    with pytest.raises(TrainingError):
        train_centroid(np.ones((4, 2)), np.array([0, 0, 1, 1]))


def test_constant_feature_is_dropped():
    X, y = _blobs(10, [np.zeros(2), np.full(2, 5.0)], 0.3, 5)
    X = np.c_[X, np.ones(len(y))]
    model = train_centroid(X, y)
    assert model.dropped == (2,)
    assert classify(model, [5.0, 5.0, 1.0])[0] == 1


def test_folds_partition_and_stratify():
    y = np.repeat([0, 1, 2], [20, 13, 7])
    fold = stratified_folds(y, 5, seed=0)
    assert set(fold.tolist()) == set(range(5))
    for c, size in ((0, 20), (1, 13), (2, 7)):
        per = np.bincount(fold[y == c], minlength=5)
        assert per.sum() == size and per.max() - per.min() <= 1
    assert np.array_equal(fold, stratified_folds(y, 5, seed=0))


def test_feature_label_matrix_shape_and_signal():
    r = np.random.default_rng(6)
    y = np.repeat([0, 1, 2], 20)
    X = r.standard_normal((60, 2))
    X[y == 1, 0] += 20
    X[y == 2, 1] += 20
    M = feature_label_matrix(X, y, [1, 2], k=5)
    assert M.shape == (2, 2)
    assert M[0, 0] == 1.0 and M[1, 1] == 1.0
    assert M[0, 1] < 0.9 and M[1, 0] < 0.9
    with pytest.raises(ValueError):
        feature_label_matrix(X, y, [0, 1])


def test_cover_singleton():
    cov = min_sensor_cover(np.array([[0.5, 0.5], [0.95, 0.92], [0.99, 0.1]]), 0.9)
    assert cov.selected == [1] and cov.uncovered == []


def test_cover_unreachable_threshold():
    cov = min_sensor_cover(np.full((3, 2), 1.0), 1.01)
    assert cov.selected == [] and cov.uncovered == [0, 1]


def test_cover_complementary_halves():
    M = np.array([[1, 1, 0, 0], [0, 0, 1, 1], [1, 0, 1, 0.0]])
    cov = min_sensor_cover(M, 0.9)
    assert sorted(cov.selected) == [0, 1]


def test_cover_prunes_redundant_rows():
    # greedy takes row 0 first, then rows 1 and 2 cover everything
    M = np.array([[1, 1, 1, 0, 0], [1, 1, 0, 1, 0], [0, 0, 1, 0, 1], [0, 0, 0, 1, 1.0]])
    cov = min_sensor_cover(M, 0.9)
    hit = M >= 0.9
    assert hit[cov.selected].any(axis=0).all()
    for r in cov.selected:
        rest = [c for c in cov.selected if c != r]
        assert not hit[rest].any(axis=0).all()


@pytest.mark.parametrize("seed", range(20))
def test_cover_is_superset_minimal(seed):
    r = np.random.default_rng(seed)
    M = r.random((12, 7))
    cov = min_sensor_cover(M, 0.8)
    hit = M >= 0.8
    coverable = hit.any(axis=0)
    assert np.array_equal(hit[cov.selected].any(axis=0) | ~coverable, np.ones(7, bool)) or not cov.selected
    for row in cov.selected:
        rest = [c for c in cov.selected if c != row]
        assert (coverable & ~hit[rest].any(axis=0)).any()
