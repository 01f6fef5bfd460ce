import numpy as np
import pytest

from tscope.characterize import characterize, mean_set
from tscope.forest import (
    DecisionTree,
    ForestModel,
    ForestParams,
    mdi_importance,
    predict_proba_forest,
    train_forest,
)
from tscope.preprocess import LabelConfig, build_windowset


def test_single_separating_feature_memorized():
    rng = np.random.default_rng(0)
    n = 100
    y = np.array([0, 1] * (n // 2))
    X = np.column_stack([y + rng.normal(0, 0.01, n), rng.normal(size=n)])
    model = train_forest(X, y, ForestParams(n_trees=20, seed=1))
    pred = model.predict_proba(X)[:, 1] >= 0.5
    assert np.mean(pred == y) == 1.0


def test_xor_memorization():
    # Exhaustive oracle: a depth-2 CART tree can memorize XOR, so with
    # unlimited depth, all features as candidates and no bootstrap the forest
    # must reach training accuracy 1.0.
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([0, 1, 1, 0])
    params = ForestParams(
        n_trees=3, min_samples_leaf=1, features_per_split=2, bootstrap=False, seed=0
    )
    model = train_forest(X, y, params)
    pred = model.predict_proba(X)[:, 1] >= 0.5
    assert np.mean(pred == y) == 1.0
    # Every tree is the same deterministic depth-2 memorizer.
    for tree in model.trees:
        internal = tree.feature >= 0
        assert np.count_nonzero(internal) == 3  # root + two children


def test_same_seed_bit_identical_serialization(tmp_path):
    rng = np.random.default_rng(4)
    X = rng.normal(size=(60, 4))
    y = (X[:, 0] + rng.normal(0, 0.5, 60) > 0).astype(int)
    params = ForestParams(n_trees=10, seed=42)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    train_forest(X, y, params).save(a)
    train_forest(X, y, params).save(b)
    assert a.read_bytes() == b.read_bytes()


def test_round_trip_identical_predictions(tmp_path):
    rng = np.random.default_rng(9)
    X = rng.normal(size=(80, 5))
    y = (X[:, 2] > 0.2).astype(int)
    model = train_forest(X, y, ForestParams(n_trees=15, seed=3))
    path = tmp_path / "model.json"
    model.save(path)
    loaded = ForestModel.load(path)
    assert np.array_equal(model.predict_proba(X), loaded.predict_proba(X))


# -- hand-built trees ----------------------------------------------------------

def _leaf_tree(dist):
    return DecisionTree(
        feature=np.array([-1]),
        threshold=np.array([0.0]),
        left=np.array([-1]),
        right=np.array([-1]),
        impurity_decrease=np.array([0.0]),
        sample_fraction=np.array([1.0]),
        dist=np.array([dist]),
    )


def _stump(feature, threshold, left_dist, right_dist):
    return DecisionTree(
        feature=np.array([feature, -1, -1]),
        threshold=np.array([threshold, 0.0, 0.0]),
        left=np.array([1, -1, -1]),
        right=np.array([2, -1, -1]),
        impurity_decrease=np.array([0.5, 0.0, 0.0]),
        sample_fraction=np.array([1.0, 0.5, 0.5]),
        dist=np.array([[0.0, 0.0], left_dist, right_dist]),
    )


def _wrap(trees, n_features=2):
    return ForestModel(
        trees=trees,
        params=ForestParams(n_trees=len(trees)),
        feature_names=[f"f{j}" for j in range(n_features)],
        class_names=("negative", "positive"),
    )


def test_predict_all_trees_agree():
    model = _wrap([_leaf_tree([0.0, 1.0]), _leaf_tree([0.0, 1.0])])
    probs = predict_proba_forest(model, np.zeros((3, 2)))
    assert np.array_equal(probs, np.tile([0.0, 1.0], (3, 1)))


def test_predict_two_trees_split_vote():
    model = _wrap([_leaf_tree([1.0, 0.0]), _leaf_tree([0.0, 1.0])])
    probs = predict_proba_forest(model, np.zeros((2, 2)))
    assert np.array_equal(probs, np.tile([0.5, 0.5], (2, 1)))


def test_predict_matches_manual_traversal():
    # Manual oracle: traverse each stump by hand for every row.
    t1 = _stump(0, 0.5, [0.9, 0.1], [0.2, 0.8])
    t2 = _stump(1, -1.0, [0.6, 0.4], [0.3, 0.7])
    model = _wrap([t1, t2])
    X = np.array([[0.0, -2.0], [1.0, 0.0], [0.5, -1.0]])

    def traverse(tree, row):
        idx = 0
        while tree.feature[idx] >= 0:
            go_left = row[tree.feature[idx]] <= tree.threshold[idx]
            idx = tree.left[idx] if go_left else tree.right[idx]
        return tree.dist[idx]

    expected = np.array(
        [(traverse(t1, row) + traverse(t2, row)) / 2.0 for row in X]
    )
    assert np.allclose(model.predict_proba(X), expected, atol=1e-15)
    assert np.allclose(model.predict_proba(X).sum(axis=1), 1.0, atol=1e-9)


# -- MDI -----------------------------------------------------------------------

def test_mdi_never_split_feature_is_zero():
    rng = np.random.default_rng(12)
    n = 200
    y = np.array([0, 1] * (n // 2))
    X = np.column_stack([y.astype(float), np.full(n, 3.0)])  # second is constant
    model = train_forest(X, y, ForestParams(n_trees=10, features_per_split=2, seed=0))
    report = mdi_importance(model)
    assert report.scores[1, 0] == 0.0
    assert report.scores[0, 0] == pytest.approx(1.0)


def test_mdi_single_split_tree_is_one():
    X = np.array([[0.0], [1.0], [0.0], [1.0]])
    y = np.array([0, 1, 0, 1])
    model = train_forest(
        X, y, ForestParams(n_trees=1, min_samples_leaf=1, features_per_split=1, bootstrap=False)
    )
    report = mdi_importance(model)
    assert report.scores[0, 0] == pytest.approx(1.0)


def test_mdi_root_split_feature_dominates():
    # Constructed dataset oracle: f0 separates almost perfectly, f1 is a noisy
    # copy that only helps deeper in the tree.
    rng = np.random.default_rng(21)
    n = 400
    y = np.array([0, 1] * (n // 2))
    X = np.column_stack([y + rng.normal(0, 0.05, n), y + rng.normal(0, 1.0, n)])
    model = train_forest(X, y, ForestParams(n_trees=30, features_per_split=2, seed=2))
    mean = mdi_importance(model).mean()
    assert mean[0] > mean[1]


def test_mdi_nonnegative_and_normalized():
    rng = np.random.default_rng(31)
    X = rng.normal(size=(150, 6))
    y = (X[:, 0] + X[:, 3] > 0).astype(int)
    model = train_forest(X, y, ForestParams(n_trees=25, seed=5))
    report = mdi_importance(model)
    assert (report.scores >= 0).all()
    assert report.scores.sum() == pytest.approx(1.0, abs=1e-9)


# -- statistical invariants ------------------------------------------------------

def test_bagging_monotonicity(mean_coded_corpus):
    corpus, _, synth_cfg = mean_coded_corpus
    ws = build_windowset(corpus, "bep", LabelConfig(tau=synth_cfg.tau))
    matrix = characterize(ws, mean_set(), include_annotations=False)
    X, y = matrix.values, matrix.labels
    listeners = np.asarray(matrix.listener_ids, dtype=object)
    unique = sorted(set(listeners.tolist()))
    test_mask = np.isin(listeners, unique[:2])
    wins = 0
    trials = 20
    for trial in range(trials):
        big = train_forest(X[~test_mask], y[~test_mask], ForestParams(n_trees=100, seed=trial))
        one = train_forest(X[~test_mask], y[~test_mask], ForestParams(n_trees=1, seed=trial))
        acc_big = np.mean((big.predict_proba(X[test_mask])[:, 1] >= 0.5) == y[test_mask])
        acc_one = np.mean((one.predict_proba(X[test_mask])[:, 1] >= 0.5) == y[test_mask])
        wins += acc_big >= acc_one
    assert wins >= 0.9 * trials


def test_pure_noise_probabilities_near_prior():
    rng = np.random.default_rng(77)
    n = 500
    y = (rng.random(n) < 0.6).astype(int)
    X = rng.normal(size=(n, 4))
    model = train_forest(X, y, ForestParams(n_trees=100, seed=1))
    probs = model.predict_proba(X)
    prior = y.mean()
    assert abs(probs[:, 1].mean() - prior) <= 0.05


# -- errors ----------------------------------------------------------------------

def test_degenerate_single_class():
    with pytest.raises(ValueError, match="degenerate single-class"):
        train_forest(np.zeros((10, 2)), np.zeros(10, dtype=int))


def test_column_mismatch():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(30, 3))
    y = (X[:, 0] > 0).astype(int)
    model = train_forest(X, y, ForestParams(n_trees=5, seed=0))
    with pytest.raises(ValueError, match="column mismatch"):
        model.predict_proba(rng.normal(size=(5, 4)))


def test_invalid_params():
    X = np.zeros((10, 2))
    y = np.array([0, 1] * 5)
    with pytest.raises(ValueError, match="n_trees"):
        train_forest(X, y, ForestParams(n_trees=0))
    with pytest.raises(ValueError, match="features_per_split"):
        train_forest(X, y, ForestParams(features_per_split=5))
