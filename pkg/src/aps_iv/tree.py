"""Axis-aligned least-squares regression tree (CART, no pruning)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class _Node:
    value: float
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


def _best_split(x: np.ndarray, y: np.ndarray, min_leaf: int):
    n = len(y)
    best = (0.0, -1, 0.0)  # (sse reduction, feature, threshold)
    total = y.sum()
    base = total * total / n
    for j in range(x.shape[1]):
        order = np.argsort(x[:, j], kind="stable")
        xs, ys = x[order, j], y[order]
        cs = np.cumsum(ys)[:-1]
        k = np.arange(1, n)
        # Split after position k-1 only where the feature value changes.
        ok = (xs[1:] > xs[:-1]) & (k >= min_leaf) & (n - k >= min_leaf)
        if not ok.any():
            continue
        gain = cs ** 2 / k + (total - cs) ** 2 / (n - k) - base
        gain = np.where(ok, gain, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best[0] * (1 + 1e-12) + 1e-12:
            best = (float(gain[i]), j, 0.5 * (xs[i] + xs[i + 1]))
    return best


def _grow(x, y, depth, max_depth, min_leaf) -> _Node:
    value = float(y.mean())
    if depth >= max_depth or len(y) < 2 * min_leaf:
        return _Node(value)
    gain, j, t = _best_split(x, y, min_leaf)
    if j < 0:
        return _Node(value)
    left = x[:, j] <= t
    return _Node(value, j, t,
                 _grow(x[left], y[left], depth + 1, max_depth, min_leaf),
                 _grow(x[~left], y[~left], depth + 1, max_depth, min_leaf))


class RegressionTree:
    """Greedy squared-error regression tree.

    Splits are placed at midpoints between consecutive distinct feature
    values; ties in gain go to the lowest feature index, so fitting is
    deterministic.
    """

    def __init__(self, max_depth: int = 4, min_leaf: int = 10):
        if max_depth < 0 or min_leaf < 1:
            raise ConfigError("max_depth must be >= 0 and min_leaf >= 1")
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.root: _Node | None = None
        self.n_features = 0
        self._arrays = None

    def fit(self, x, y) -> "RegressionTree":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 2 or len(x) != len(y) or len(y) == 0:
            raise DataError("tree needs a non-empty 2-d design and a matching response")
        self.n_features = x.shape[1]
        self.root = _grow(x, y, 0, self.max_depth, self.min_leaf)
        self._flatten()
        return self

    def _flatten(self):
        feats, thr, left, right, vals = [], [], [], [], []

        def add(node):
            k = len(feats)
            feats.append(max(node.feature, 0))
            thr.append(node.threshold)
            vals.append(node.value)
            left.append(k)
            right.append(k)
            if not node.is_leaf:
                left[k] = add(node.left)
                right[k] = add(node.right)
            return k

        add(self.root)
        # Leaves point at themselves, so a fixed number of descent steps is safe.
        self._arrays = tuple(np.asarray(a) for a in (feats, thr, left, right, vals))

    def predict(self, x) -> np.ndarray:
        if self.root is None:
            raise RuntimeError("tree is not fitted")
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_features:
            raise DataError(f"tree expects {self.n_features} features, got {x.shape[1]}")
        feat, thr, left, right, vals = self._arrays
        node = np.zeros(len(x), dtype=np.intp)
        rows = np.arange(len(x))
        for _ in range(self.depth):
            go_left = x[rows, feat[node]] <= thr[node]
            node = np.where(go_left, left[node], right[node])
        return vals[node]

    @property
    def n_leaves(self) -> int:
        def count(node):
            return 1 if node.is_leaf else count(node.left) + count(node.right)
        return 0 if self.root is None else count(self.root)

    @property
    def depth(self) -> int:
        def d(node):
            return 0 if node.is_leaf else 1 + max(d(node.left), d(node.right))
        return 0 if self.root is None else d(self.root)
