"""Tests for the random forest and distillation."""

import tempfile
from pathlib import Path

import numpy as np
import pytest

from malproc_monitor.exceptions import ConfigurationError, InvalidInputError
from malproc_monitor.models.distillation import (
    agreement,
    distill,
    ground_truth_labels,
    split_holdout,
    teacher_label,
    train_forest_direct,
)
from malproc_monitor.models.forest import (
    DecisionTree,
    ForestClassifier,
    ForestConfig,
    build_tree,
    forest_predict,
    gini,
    train_forest,
)
from malproc_monitor.models.hyperparameters import Hyperparameters
from malproc_monitor.models.training import train
from malproc_monitor.telemetry.features import FEATURE_INDEX

from .helpers import separable_traces

IO_OTHER = FEATURE_INDEX["io_other_count"]


def leaf(value):
    return DecisionTree.from_nodes([[-1, 0.0, -1, -1, value]])


def separable_data(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, (n, 26))
    y = (X[:, IO_OTHER] > 0.5).astype(int)
    return X, y


def test_gini():
    """Test Gini impurity of class counts."""
    assert gini([5, 5]) == pytest.approx(0.5)
    assert gini([10, 0]) == 0.0
    assert gini([0, 0]) == 0.0
    assert gini([1, 3]) == pytest.approx(0.375)


def test_majority_vote():
    """Test majority voting and benign ties."""
    assert ForestClassifier([leaf(1), leaf(1), leaf(0)]).predict(np.zeros(26)).tolist() == [1]
    assert ForestClassifier([leaf(1), leaf(0)]).predict(np.zeros(26)).tolist() == [0]
    assert forest_predict(ForestClassifier([leaf(1)]), np.zeros(26)) == 1


def test_hand_built_split():
    """Test a single split routes values <= threshold left."""
    tree = DecisionTree.from_nodes([
        [IO_OTHER, 100.0, 1, 2, 0],
        [-1, 0.0, -1, -1, 0],
        [-1, 0.0, -1, -1, 1],
    ])
    forest = ForestClassifier([tree])
    X = np.zeros((3, 26))
    X[:, IO_OTHER] = [50.0, 100.0, 150.0]
    assert forest.predict(X).tolist() == [0, 0, 1]
    assert tree.predict(X).tolist() == [0, 0, 1]
    assert tree.depth == 1


def test_invalid_trees_rejected():
    """Test malformed node tables."""
    with pytest.raises(InvalidInputError):
        DecisionTree.from_nodes([])
    with pytest.raises(InvalidInputError):
        DecisionTree.from_nodes([[30, 1.0, 1, 2, 0], [-1, 0.0, -1, -1, 0], [-1, 0.0, -1, -1, 1]])
    with pytest.raises(InvalidInputError):
        DecisionTree.from_nodes([[0, 1.0, 1, 5, 0], [-1, 0.0, -1, -1, 0]])
    with pytest.raises(ConfigurationError):
        ForestClassifier([])


def test_forest_learns_separable_feature():
    """Test a forest splits on the one informative feature."""
    X, y = separable_data()
    forest = train_forest(X, y, ForestConfig(n_trees=15, max_features=26, min_samples_leaf=1))

    X_test, y_test = separable_data(seed=1)
    assert np.mean(forest.predict(X_test) == y_test) > 0.95


def test_vectorized_votes_match_tree_walk():
    """Test packed voting agrees with walking every tree."""
    X, y = separable_data()
    forest = train_forest(X, y, ForestConfig(n_trees=7, max_depth=4))
    walked = sum(tree.predict(X) for tree in forest.trees)
    np.testing.assert_array_equal(forest.votes(X), walked)


def test_forest_is_deterministic():
    """Test the same seed grows the same forest."""
    X, y = separable_data()
    config = ForestConfig(n_trees=5, seed=3, n_jobs=2)
    a, b = train_forest(X, y, config), train_forest(X, y, config)
    assert a.seeds == b.seeds
    assert [t.to_nodes() for t in a.trees] == [t.to_nodes() for t in b.trees]


def test_build_tree_respects_depth():
    """Test max_depth bounds the tree."""
    X, y = separable_data()
    tree = build_tree(X, y, ForestConfig(max_depth=2, min_samples_leaf=1), seed=0)
    assert tree.depth <= 2

    stump = build_tree(X, y, ForestConfig(max_depth=0), seed=0)
    assert stump.node_count == 1


def test_forest_arity_error():
    """Test a 25-feature snapshot is rejected."""
    forest = ForestClassifier([leaf(0)])
    with pytest.raises(InvalidInputError):
        forest.predict(np.zeros((2, 25)))


def test_training_errors():
    """Test empty and single-class training sets."""
    with pytest.raises(InvalidInputError):
        train_forest(np.zeros((0, 26)), np.zeros(0))
    with pytest.raises(InvalidInputError):
        train_forest(np.zeros((4, 26)), np.zeros(4))

    forest = train_forest(np.zeros((4, 26)), np.zeros(4), ForestConfig(n_trees=2, allow_single_class=True))
    assert forest.predict(np.zeros(26)).tolist() == [0]


def test_save_and_load():
    """Test a forest predicts identically after loading."""
    X, y = separable_data()
    forest = train_forest(X, y, ForestConfig(n_trees=4))
    forest.metadata["kind"] = "direct"

    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "forest.json"
        forest.save(path)
        loaded = ForestClassifier.load(path)

    assert loaded.metadata == {"kind": "direct"}
    assert loaded.config == forest.config
    np.testing.assert_array_equal(loaded.predict(X), forest.predict(X))

    with pytest.raises(FileNotFoundError):
        ForestClassifier.load("/nonexistent/forest.json")


def test_teacher_labels_follow_threshold():
    """Test teacher labels are score > θ per snapshot."""
    traces = separable_traces(length=5)
    teacher = train(traces, Hyperparameters(hidden_neurons=4, window_size=2, epochs=1))

    teacher.threshold = 0.0
    assert teacher_label(teacher, traces).labels.all()
    teacher.threshold = 1.0
    labeled = teacher_label(teacher, traces)
    assert not labeled.labels.any()
    assert labeled.features.shape == (60, 26)


def test_ground_truth_labels():
    """Test direct labels come from the application label."""
    traces = separable_traces(n_benign=2, n_malicious=1, length=4)
    dataset = ground_truth_labels(traces)
    assert dataset.labels.tolist() == [0] * 8 + [1] * 4


def test_distill_records_agreement():
    """Test the student is trained on teacher decisions and scored against them."""
    traces = separable_traces(length=8)
    teacher = train(traces, Hyperparameters(hidden_neurons=8, window_size=2, epochs=30, learning_rate=0.01))
    training, holdout = split_holdout(traces, 0.25, seed=0)
    assert len(training) == 9 and len(holdout) == 3

    student = distill(teacher, training, ForestConfig(n_trees=10), holdout)
    assert student.metadata["kind"] == "distilled"
    assert 0.0 <= student.metadata["teacher_agreement"] <= 1.0
    assert student.metadata["teacher_agreement"] == pytest.approx(agreement(student, teacher, holdout))


def test_distill_constant_teacher():
    """Test a teacher that never fires yields a constant benign student."""
    traces = separable_traces(length=4)
    teacher = train(traces, Hyperparameters(hidden_neurons=4, window_size=2, epochs=0))
    teacher.threshold = 1.0

    student = distill(teacher, traces, ForestConfig(n_trees=3))
    assert not student.predict(np.vstack([t.feature_matrix() for t in traces])).any()


def test_direct_forest():
    """Test the ground-truth baseline separates the hand-made classes."""
    traces = separable_traces(length=6)
    forest = train_forest_direct(traces, ForestConfig(n_trees=10, subsample=0.5))
    assert forest.metadata["kind"] == "direct"
    assert forest.metadata["training_snapshots"] == 36

    X = np.vstack([t.feature_matrix() for t in traces])
    y = ground_truth_labels(traces).labels
    assert np.mean(forest.predict(X) == y) > 0.9


def test_split_holdout_validation():
    """Test the holdout fraction range."""
    with pytest.raises(InvalidInputError):
        split_holdout([], 1.0, seed=0)
