import json

import numpy as np
import pytest

from src.errors import CheckpointError, ContractError
from src.explainer import TreeAttribution, explain_tree, shap_tree_model
from src.features import feature_names
from src.surrogate import export_tree, fit_surrogate_tree, load_tree, parse_tree, render_text, save_tree


def _separable(n=40, seed=0):
    """Class follows the sign of feature 0; features 1 and 2 are noise."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    X[:, 0] = np.where(np.arange(n) % 2 == 0, -1.0, 1.0) + 0.1 * rng.normal(size=n)
    y = (X[:, 0] > 0).astype(int)
    return X, y


def _noisy(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 4))
    y = rng.integers(0, 5, n)
    return X, y


def test_separable_data_needs_one_split():
    X, y = _separable()
    names = feature_names([3], [0])[:3]
    tree = fit_surrogate_tree(X, y, max_depth=3, feature_names=names)
    assert tree.depth == 1 and tree.n_leaves == 2
    root = tree.nodes[0]
    assert root.feature == 0 and -1.0 < root.threshold < 1.0
    assert tree.label(root).startswith("μ₀¹ ≤ ")
    assert tree.score(X, y) == 1.0
    assert [tree.label(tree.nodes[i]) for i in (root.left, root.right)] == ["walk", "run"]


def test_depth_limit_and_leaf_budget():
    X, y = _noisy()
    tree = fit_surrogate_tree(X, y, max_depth=3)
    assert tree.depth <= 3 and tree.n_leaves <= 8
    assert all(len(n.class_counts) == 5 for n in tree.nodes)


def test_leaf_counts_add_up_to_the_support():
    X, y = _noisy(seed=1)
    tree = fit_surrogate_tree(X, y, max_depth=3)
    leaves = [n for n in tree.nodes if n.is_leaf]
    assert sum(n.n_samples for n in leaves) == len(y)
    np.testing.assert_array_equal(np.sum([n.class_counts for n in leaves], axis=0), np.bincount(y, minlength=5))
    assert tree.nodes[0].n_samples == len(y)


def _gini(y, k=5):
    p = np.bincount(y, minlength=k) / len(y)
    return 1.0 - np.sum(p ** 2)


def test_root_split_is_the_best_cut():
    X, y = _noisy(n=30, seed=6)
    root = fit_surrogate_tree(X, y, max_depth=1).nodes[0]
    best = None
    for f in range(X.shape[1]):
        values = np.unique(X[:, f])
        for lo, hi in zip(values[:-1], values[1:]):
            mask = X[:, f] <= (lo + hi) / 2
            child = (mask.sum() * _gini(y[mask]) + (~mask).sum() * _gini(y[~mask])) / len(y)
            gain = _gini(y) - child
            if best is None or gain > best[2] + 1e-12:
                best = (f, (lo + hi) / 2, gain)
    assert root.feature == best[0]
    assert root.threshold == pytest.approx(best[1])
    assert root.impurity == pytest.approx(_gini(y))


@pytest.mark.parametrize("seed", range(10))
def test_equal_gain_splits_go_to_the_lowest_feature(seed):
    X, y = _separable(seed=seed)
    copies = np.repeat(X[:, :1], 4, axis=1)
    tree = fit_surrogate_tree(copies, y, max_depth=1, seed=seed)
    assert tree.nodes[0].feature == 0


def test_equal_gain_thresholds_go_to_the_lowest_cut():
    # cutting off either end sample gives the same gini decrease
    tree = fit_surrogate_tree(np.array([[0.0], [1.0], [2.0], [3.0]]), [0, 1, 1, 0], max_depth=1)
    assert tree.nodes[0].threshold == 0.5


def test_single_class_data_is_one_leaf():
    X, _ = _separable()
    tree = fit_surrogate_tree(X, np.full(len(X), 3))
    assert tree.depth == 0 and tree.n_leaves == 1
    assert tree.label(tree.nodes[0]) == "sit"


def test_fitting_does_not_depend_on_the_seed():
    X, y = _noisy(seed=3)
    a = export_tree(fit_surrogate_tree(X, y, seed=7))
    b = export_tree(fit_surrogate_tree(X, y, seed=123))
    assert a == b


def test_export_parse_round_trip():
    X, y = _noisy(seed=5)
    tree = fit_surrogate_tree(X, y, max_depth=2, criterion="entropy")
    exported = export_tree(tree)
    assert exported["format"] == "csihar-surrogate-tree" and "leaf:" in exported["text"]
    parsed = parse_tree(json.dumps(exported))
    assert parsed.criterion == "entropy" and parsed.depth == tree.depth
    np.testing.assert_array_equal(parsed.predict(X), tree.predict(X))
    assert render_text(parsed) == exported["text"]
    with pytest.raises(ContractError):
        parse_tree({"format": "something-else"})


def test_save_load(tmp_path):
    X, y = _separable()
    tree = fit_surrogate_tree(X, y)
    path = save_tree(tree, tmp_path / "tree.joblib")
    loaded = load_tree(path)
    np.testing.assert_array_equal(loaded.predict(X), y)
    bad = tmp_path / "bad.joblib"
    bad.write_bytes(b"garbage")
    with pytest.raises(CheckpointError):
        load_tree(bad)


def test_fit_errors():
    X, y = _separable()
    with pytest.raises(ContractError):
        fit_surrogate_tree(X, y[:-1])
    with pytest.raises(ContractError):
        fit_surrogate_tree(X, np.full(len(y), 5))
    with pytest.raises(ContractError):
        fit_surrogate_tree(X, y, max_depth=0)
    with pytest.raises(ContractError):
        fit_surrogate_tree(X, y, feature_names=["a"])
    with pytest.raises(ContractError):
        fit_surrogate_tree(np.zeros((0, 3)), [])


# ---------- attribution ----------
def test_attribution_ranks_the_split_feature_first():
    X, y = _separable()
    tree = fit_surrogate_tree(X, y, feature_names=["a", "b", "c"])
    with_data = explain_tree(tree, X, top_k=2)
    assert with_data["method"] in ("shap", "impurity_decrease")
    assert with_data["top_features"][0]["feature"] == "a"
    assert len(with_data["top_features"]) == 2

    no_data = TreeAttribution(tree).explain()
    assert no_data["method"] == "impurity_decrease"
    assert no_data["top_features"][0] == {"feature": "a", "importance": 1.0}


def test_parsed_tree_is_attributed_like_the_fitted_one():
    X, y = _noisy(seed=8)
    tree = fit_surrogate_tree(X, y, feature_names=["a", "b", "c", "d"])
    parsed = parse_tree(export_tree(tree))
    assert explain_tree(parsed, X, top_k=10) == explain_tree(tree, X, top_k=10)


def test_shap_model_layout():
    X, y = _separable()
    model = shap_tree_model(fit_surrogate_tree(X, y))["trees"][0]
    np.testing.assert_array_equal(model["children_left"], [1, -1, -1])
    np.testing.assert_array_equal(model["features"], [0, -2, -2])
    np.testing.assert_allclose(model["values"].sum(axis=1), 1.0)
    np.testing.assert_array_equal(model["node_sample_weight"], [40, 20, 20])
