"""Random-forest regression built from scratch.

Each tree trains on a bootstrap resample.  At every node a random subset
of max_features columns is considered; the split minimizing the summed
within-child squared error is found exhaustively over midpoints of sorted
unique values.  The forest prediction is the plain mean of tree outputs.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, InsufficientDataError


class _Node:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, value=None, feature=None, threshold=None,
                 left=None, right=None):
        self.value = value
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right


def _best_split(X, y, feature_ids, min_samples_leaf):
    best = None  # (sse, feature, threshold)
    for f in feature_ids:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        total_sum, total_sq = csum[-1], csq[-1]
        n = ys.size
        # candidate boundaries between distinct adjacent values
        for i in range(min_samples_leaf, n - min_samples_leaf + 1):
            if i == 0 or i == n or xs[i] <= xs[i - 1]:
                continue
            ls, lq = csum[i - 1], csq[i - 1]
            rs, rq = total_sum - ls, total_sq - lq
            sse = (lq - ls * ls / i) + (rq - rs * rs / (n - i))
            if best is None or sse < best[0] - 1e-12:
                best = (sse, f, 0.5 * (xs[i - 1] + xs[i]))
    return best


def _grow(X, y, rng, max_features, max_depth, min_samples_split,
          min_samples_leaf, depth):
    n, d = X.shape
    if (n < min_samples_split or n < 2 * min_samples_leaf
            or depth >= max_depth or np.ptp(y) == 0.0):
        return _Node(value=float(np.mean(y)))
    k = min(max_features, d)
    feature_ids = np.sort(rng.permutation(d)[:k])
    split = _best_split(X, y, feature_ids, min_samples_leaf)
    if split is None:
        return _Node(value=float(np.mean(y)))
    _, f, threshold = split
    left_mask = X[:, f] <= threshold
    left = _grow(X[left_mask], y[left_mask], rng, max_features, max_depth,
                 min_samples_split, min_samples_leaf, depth + 1)
    right = _grow(X[~left_mask], y[~left_mask], rng, max_features, max_depth,
                  min_samples_split, min_samples_leaf, depth + 1)
    return _Node(feature=f, threshold=threshold, left=left, right=right)


def _predict_tree(node, x):
    while node.value is None:
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.value


def _flatten(node, out):
    idx = len(out)
    if node.value is not None:
        out.append({"value": node.value})
        return idx
    out.append(None)
    entry = {"feature": int(node.feature), "threshold": float(node.threshold)}
    entry["left"] = _flatten(node.left, out)
    entry["right"] = _flatten(node.right, out)
    out[idx] = entry
    return idx


def _unflatten(entries, idx):
    entry = entries[idx]
    if "value" in entry:
        return _Node(value=entry["value"])
    return _Node(feature=entry["feature"], threshold=entry["threshold"],
                 left=_unflatten(entries, entry["left"]),
                 right=_unflatten(entries, entry["right"]))


class ForestRegressor:
    def __init__(self, n_estimators: int = 200, max_features: int = 1,
                 max_depth: int = 10, min_samples_split: int = 2,
                 min_samples_leaf: int = 1, seed: int = 0,
                 bootstrap: bool = True):
        if n_estimators < 1 or max_features < 1 or min_samples_leaf < 1:
            raise ConfigError("n_estimators, max_features and min_samples_leaf "
                              "must be >= 1")
        self.n_estimators = int(n_estimators)
        self.max_features = int(max_features)
        self.max_depth = int(max_depth)
        self.min_samples_split = int(min_samples_split)
        self.min_samples_leaf = int(min_samples_leaf)
        self.seed = int(seed)
        self.bootstrap = bootstrap
        self.trees = []

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n = X.shape[0]
        if n < self.min_samples_split:
            raise InsufficientDataError(
                f"need >= {self.min_samples_split} rows, got {n}")
        self.trees = []
        for tree_idx in range(self.n_estimators):
            rng = np.random.default_rng([self.seed, tree_idx])
            if self.bootstrap:
                idx = rng.integers(0, n, size=n)
            else:
                idx = np.arange(n)
            self.trees.append(_grow(X[idx], y[idx], rng, self.max_features,
                                    self.max_depth, self.min_samples_split,
                                    self.min_samples_leaf, depth=0))
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        preds = np.array([[_predict_tree(tree, x) for tree in self.trees]
                          for x in X])
        return preds.mean(axis=1)

    def predict_per_tree(self, X):
        X = np.asarray(X, dtype=float)
        return np.array([[_predict_tree(tree, x) for x in X]
                         for tree in self.trees])

    def to_params(self):
        flat = []
        roots = []
        for tree in self.trees:
            entries = []
            _flatten(tree, entries)
            flat.append(entries)
            roots.append(0)
        return {
            "n_estimators": self.n_estimators, "max_features": self.max_features,
            "max_depth": self.max_depth,
            "min_samples_split": self.min_samples_split,
            "min_samples_leaf": self.min_samples_leaf, "seed": self.seed,
            "trees": flat, "roots": roots,
        }

    @classmethod
    def from_params(cls, params):
        model = cls(n_estimators=params["n_estimators"],
                    max_features=params["max_features"],
                    max_depth=params["max_depth"],
                    min_samples_split=params["min_samples_split"],
                    min_samples_leaf=params["min_samples_leaf"],
                    seed=params["seed"])
        model.trees = [_unflatten(entries, root)
                       for entries, root in zip(params["trees"], params["roots"])]
        return model
