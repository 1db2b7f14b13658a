"""k-nearest-neighbour regression with Minkowski distances.

The prediction is the unweighted mean of the k nearest training targets.
Distance ties are broken by training-row index so that predictions do not
depend on incidental row order.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError


class KnnRegressor:
    def __init__(self, n_neighbors: int = 10, power: int = 2):
        if n_neighbors < 1:
            raise ConfigError("n_neighbors must be >= 1")
        if power not in (1, 2, 3):
            raise ConfigError("Minkowski power must be 1, 2, or 3")
        self.n_neighbors = int(n_neighbors)
        self.power = int(power)
        self.X_train = None
        self.y_train = None

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.n_neighbors > X.shape[0]:
            raise ConfigError(f"k={self.n_neighbors} exceeds n={X.shape[0]}")
        self.X_train = X
        self.y_train = y
        return self

    def _distances(self, x):
        diff = np.abs(self.X_train - x)
        if self.power == 1:
            return diff.sum(axis=1)
        if self.power == 2:
            return np.sqrt((diff * diff).sum(axis=1))
        return np.cbrt((diff ** 3).sum(axis=1))

    def predict_one(self, x):
        d = self._distances(np.asarray(x, dtype=float))
        order = np.lexsort((np.arange(d.size), d))
        return float(np.mean(self.y_train[order[: self.n_neighbors]]))

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        return np.array([self.predict_one(x) for x in X])

    def to_params(self):
        return {
            "n_neighbors": self.n_neighbors, "power": self.power,
            "X_train": self.X_train.tolist(), "y_train": self.y_train.tolist(),
        }

    @classmethod
    def from_params(cls, params):
        model = cls(n_neighbors=params["n_neighbors"], power=params["power"])
        model.X_train = np.asarray(params["X_train"], dtype=float)
        model.y_train = np.asarray(params["y_train"], dtype=float)
        return model
