import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from aps_iv.errors import ConfigError, DataError
from aps_iv.tree import RegressionTree


def _brute_best_split(x, y, min_leaf):
    """Exhaustive SSE search over every feature and midpoint."""
    best = (np.sum((y - y.mean()) ** 2), -1, 0.0)
    for j in range(x.shape[1]):
        vals = np.unique(x[:, j])
        for a, b in zip(vals[:-1], vals[1:]):
            t = 0.5 * (a + b)
            left = x[:, j] <= t
            if left.sum() < min_leaf or (~left).sum() < min_leaf:
                continue
            sse = np.sum((y[left] - y[left].mean()) ** 2) + np.sum((y[~left] - y[~left].mean()) ** 2)
            if sse < best[0] - 1e-9:
                best = (sse, j, t)
    return best


def test_step_function_recovered():
    x = np.linspace(-1, 1, 200)[:, None]
    y = np.where(x[:, 0] > 0.3, 2.0, -1.0)
    tree = RegressionTree(max_depth=1, min_leaf=5).fit(x, y)
    assert tree.n_leaves == 2 and tree.depth == 1
    assert_array_equal(tree.predict([[0.0], [0.9]]), [-1.0, 2.0])
    assert 0.29 < tree.root.threshold < 0.31


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8))
def test_root_split_matches_brute_force(seed, min_leaf):
    r = np.random.default_rng(seed)
    x = np.round(r.normal(size=(40, 3)), 1)
    y = x[:, 1] ** 2 + r.normal(size=40)
    tree = RegressionTree(max_depth=1, min_leaf=min_leaf).fit(x, y)
    sse, j, t = _brute_best_split(x, y, min_leaf)
    pred = tree.predict(x)
    assert np.sum((y - pred) ** 2) == pytest.approx(sse, rel=1e-9, abs=1e-9)
    if j >= 0:
        assert tree.root.feature == j and tree.root.threshold == pytest.approx(t)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_structure_limits(seed):
    r = np.random.default_rng(seed)
    x = r.normal(size=(300, 4))
    y = np.sin(3 * x[:, 0]) + x[:, 2] + 0.1 * r.normal(size=300)
    tree = RegressionTree(max_depth=4, min_leaf=10).fit(x, y)
    assert tree.depth <= 4 and tree.n_leaves <= 16
    pred = tree.predict(x)
    assert len(np.unique(pred)) <= tree.n_leaves
    # every leaf holds at least min_leaf training points
    _, counts = np.unique(pred, return_counts=True)
    assert counts.min() >= 10
    # leaf values are training means, so fitted values preserve the total
    assert pred.sum() == pytest.approx(y.sum())


def test_deterministic_and_matches_recursive_descent():
    r = np.random.default_rng(3)
    x = r.normal(size=(500, 5))
    y = x[:, 0] * x[:, 1] + r.normal(size=500)
    a = RegressionTree().fit(x, y)
    b = RegressionTree().fit(x, y)
    q = r.normal(size=(100, 5))
    assert_array_equal(a.predict(q), b.predict(q))

    def walk(node, row):
        while not node.is_leaf:
            node = node.left if row[node.feature] <= node.threshold else node.right
        return node.value

    assert_allclose(a.predict(q), [walk(a.root, row) for row in q], rtol=0, atol=0)


def test_constant_response_gives_single_leaf():
    tree = RegressionTree().fit(np.random.default_rng(0).normal(size=(50, 2)), np.full(50, 3.0))
    assert tree.n_leaves == 1
    assert_array_equal(tree.predict(np.zeros((3, 2))), 3.0)


def test_tree_errors():
    with pytest.raises(ConfigError):
        RegressionTree(max_depth=-1)
    with pytest.raises(ConfigError):
        RegressionTree(min_leaf=0)
    with pytest.raises(RuntimeError):
        RegressionTree().predict([[0.0]])
    with pytest.raises(DataError):
        RegressionTree().fit(np.zeros((0, 2)), np.zeros(0))
    tree = RegressionTree().fit(np.zeros((20, 2)), np.zeros(20))
    with pytest.raises(DataError):
        tree.predict(np.zeros((1, 3)))
