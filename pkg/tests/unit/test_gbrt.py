"""
Unit tests for the three-class boosted forest.

Reference: expert-aggregation-layer.md §Boosted forest
"""
import json

import numpy as np
import pytest

from src.config import ForestParams
from src.expert_aggregation.gbrt import (
    BoostedForest,
    ForestError,
    RegressionTree,
    TrainingSample,
    canonicalize_rows,
    forest_violations,
    predict_class,
    predict_margins,
    train_forest,
    train_forest_arrays,
)


def _clusters(seed=0, per_class=150):
    rng = np.random.default_rng(seed)
    centers = {1: -5.0, 2: 0.0, 3: 5.0}
    X, y = [], []
    for label, c in centers.items():
        X.append(np.column_stack([rng.normal(c, 0.7, per_class), rng.normal(0.0, 1.0, per_class)]))
        y.extend([label] * per_class)
    return np.vstack(X), np.array(y)


def _leaf(value):
    return RegressionTree(
        children_left=np.array([-1]),
        children_right=np.array([-1]),
        feature=np.array([-1]),
        threshold=np.array([0.0]),
        value=np.array([float(value)]),
        cover=np.array([1.0]),
    )


def _stump(threshold=1.0):
    return RegressionTree(
        children_left=np.array([1, -1, -1]),
        children_right=np.array([2, -1, -1]),
        feature=np.array([0, -1, -1]),
        threshold=np.array([threshold, 0.0, 0.0]),
        value=np.array([0.0, -1.0, 1.0]),
        cover=np.array([60.0, 30.0, 30.0]),
    )


# ===========================================================================
# Training
# ===========================================================================


class TestTraining:

    def test_separable_clusters(self):
        X, y = _clusters()
        forest = train_forest_arrays(X, y, seed=3)
        predicted = np.array([predict_class(forest, row)[0] for row in X])
        assert (predicted == y).mean() >= 0.95
        assert predict_class(forest, [-5.0, 0.0])[0] == 1
        assert predict_class(forest, [0.0, 0.0])[0] == 2
        assert predict_class(forest, [5.0, 0.0])[0] == 3
        assert forest_violations(forest) == []

    def test_replication_equals_duplication(self):
        X, y = _clusters(1, per_class=40)
        weights = np.where(y == 2, 1, 5)
        replicated = [TrainingSample(tuple(r), int(l), int(w)) for r, l, w in zip(X, y, weights)]
        duplicated = [
            TrainingSample(tuple(r), int(l)) for r, l, w in zip(X, y, weights) for _ in range(w)
        ]
        params = ForestParams(min_child_weight=2.0)
        a = train_forest(replicated, params, seed=5)
        b = train_forest(duplicated, params, seed=5)
        assert a.to_json() == b.to_json()

    def test_deterministic_for_seed(self):
        X, y = _clusters(2, per_class=50)
        params = ForestParams(colsample_per_node=0.5, min_child_weight=2.0)
        assert (
            train_forest_arrays(X, y, params=params, seed=9).to_json()
            == train_forest_arrays(X, y, params=params, seed=9).to_json()
        )

    def test_single_class_gives_constant_forest(self):
        X = np.arange(20.0).reshape(10, 2)
        forest = train_forest_arrays(X, np.full(10, 3))
        assert forest.constant_class == 3
        assert all(t.n_nodes == 1 for rt in forest.trees for t in rt)
        assert predict_class(forest, [100.0, -100.0])[0] == 3

    def test_canonicalize_merges_duplicates(self):
        X = np.array([[1.0, 2.0], [0.0, 0.0], [1.0, 2.0]])
        Xc, yc, wc = canonicalize_rows(X, np.array([2, 1, 2]), np.array([1.0, 1.0, 4.0]))
        assert Xc.tolist() == [[0.0, 0.0], [1.0, 2.0]]
        assert yc.tolist() == [1, 2]
        assert wc.tolist() == [1.0, 5.0]

    @pytest.mark.parametrize(
        "X, y, w",
        [
            (np.zeros((3, 2)), np.array([1, 2, 4]), None),
            (np.zeros((0, 2)), np.array([], dtype=int), None),
            (np.zeros((3, 2)), np.array([1, 2]), None),
            (np.zeros((3, 2)), np.array([1, 2, 3]), np.ones(2)),
        ],
    )
    def test_rejects_bad_input(self, X, y, w):
        with pytest.raises(ForestError):
            train_forest_arrays(X, y, w)

    def test_empty_samples(self):
        with pytest.raises(ForestError):
            train_forest([])


# ===========================================================================
# Prediction
# ===========================================================================


class TestPrediction:

    def test_rows_equal_to_threshold_go_right(self):
        tree = _stump(1.0)
        assert tree.predict(np.array([0.999])) == -1.0
        assert tree.predict(np.array([1.0])) == 1.0
        assert tree.apply(np.array([[0.5], [1.0], [3.0]])).tolist() == [1, 2, 2]

    def test_ties_resolve_to_class_two(self):
        forest = BoostedForest([[_leaf(0.0), _leaf(0.0), _leaf(0.0)]], ForestParams(), 0, 1)
        assert predict_class(forest, [0.0])[0] == 2
        forest = BoostedForest([[_leaf(1.0), _leaf(-1.0), _leaf(1.0)]], ForestParams(), 0, 1)
        assert predict_class(forest, [0.0])[0] == 2

    def test_margins_sum_over_rounds(self):
        round_trees = [_leaf(0.5), _leaf(0.0), _leaf(-0.5)]
        forest = BoostedForest([round_trees, round_trees], ForestParams(), 0, 1)
        assert predict_margins(forest, [0.0]).tolist() == [1.0, 0.0, -1.0]
        assert predict_class(forest, [0.0])[0] == 1

    def test_feature_count_checked(self):
        forest = BoostedForest([[_leaf(0.0)] * 3], ForestParams(), 0, 2)
        with pytest.raises(ForestError):
            predict_margins(forest, [1.0, 2.0, 3.0])


# ===========================================================================
# Structure and serialization
# ===========================================================================


class TestStructure:

    def test_violations_reported(self):
        forest = BoostedForest(
            [[_stump(), _leaf(0.0), _leaf(0.0)]], ForestParams(max_depth=0, min_child_weight=40.0), 0, 1
        )
        problems = forest_violations(forest)
        assert any("depth" in p for p in problems)
        assert sum("cover" in p for p in problems) == 2

    def test_json_round_trip(self):
        X, y = _clusters(4, per_class=30)
        forest = train_forest_arrays(X, y, params=ForestParams(min_child_weight=2.0), seed=1)
        restored = BoostedForest.from_json(forest.to_json())
        assert restored.to_json() == forest.to_json()
        for row in X[:20]:
            assert np.array_equal(predict_margins(restored, row), predict_margins(forest, row))

    def test_unknown_format_version(self):
        raw = json.loads(BoostedForest([[_leaf(0.0)] * 3], ForestParams(), 0, 1).to_json())
        raw["format_version"] = 99
        with pytest.raises(ForestError):
            BoostedForest.from_dict(raw)

    def test_tree_missing_field(self):
        with pytest.raises(ForestError):
            RegressionTree.from_dict({"children_left": [-1]})
