"""Sigmoid-output linear model used as a regressor.

Training targets are min-max mapped into (0.05, 0.95) using the training
fold's range; the weights then minimize the squared error of
sigmoid(w.x + b) against the mapped target plus a penalty of strength 1/C
(l1, l2, or an even elasticnet blend; the bias is never penalized).
Optimization is proximal gradient descent with backtracking, so the l1
term is handled exactly.  Predictions are inverse-mapped back to bpm.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DegenerateTargetError

PENALTIES = ("l1", "l2", "elasticnet")
_LO, _HI = 0.05, 0.95


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class SigmoidRegressor:
    def __init__(self, c: float = 1.0, penalty: str = "l2",
                 elasticnet_ratio: float = 0.5, max_iter: int = 5000,
                 tol: float = 1e-10):
        if c <= 0:
            raise ConfigError("C must be positive")
        if penalty not in PENALTIES:
            raise ConfigError(f"penalty must be one of {PENALTIES}")
        self.c = float(c)
        self.penalty = penalty
        self.elasticnet_ratio = float(elasticnet_ratio)
        self.max_iter = int(max_iter)
        self.tol = float(tol)
        self.w = None
        self.b = 0.0
        self.y_min = 0.0
        self.y_max = 1.0
        self.constant = None

    def _penalty_fracs(self):
        if self.penalty == "l1":
            return 1.0, 0.0
        if self.penalty == "l2":
            return 0.0, 1.0
        r = self.elasticnet_ratio
        return r, 1.0 - r

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise DegenerateTargetError("training targets are not finite")
        self.y_min = float(np.min(y))
        self.y_max = float(np.max(y))
        if self.y_max == self.y_min:
            # constant target: the min-max map collapses, predict the constant
            self.w = np.zeros(X.shape[1])
            self.b = 0.0
            self.constant = self.y_min
            return self
        self.constant = None
        z = _LO + (_HI - _LO) * (y - self.y_min) / (self.y_max - self.y_min)

        n, d = X.shape
        l1_frac, l2_frac = self._penalty_fracs()
        strength = 1.0 / self.c
        w = np.zeros(d)
        b = float(np.log(np.mean(z) / (1.0 - np.mean(z))))

        def smooth_loss_grad(w, b):
            s = _sigmoid(X @ w + b)
            resid = s - z
            loss = 0.5 * float(np.sum(resid ** 2))
            loss += 0.5 * strength * l2_frac * float(w @ w)
            common = resid * s * (1.0 - s)
            gw = X.T @ common + strength * l2_frac * w
            gb = float(np.sum(common))
            return loss, gw, gb

        def total_loss(w, b):
            s = _sigmoid(X @ w + b)
            loss = 0.5 * float(np.sum((s - z) ** 2))
            loss += 0.5 * strength * l2_frac * float(w @ w)
            loss += strength * l1_frac * float(np.sum(np.abs(w)))
            return loss

        step = 1.0 / max(n, 1)
        current = total_loss(w, b)
        for _ in range(self.max_iter):
            _, gw, gb = smooth_loss_grad(w, b)
            improved = False
            trial = step
            for _ in range(40):
                w_new = w - trial * gw
                if l1_frac > 0:
                    thresh = trial * strength * l1_frac
                    w_new = np.sign(w_new) * np.maximum(np.abs(w_new) - thresh, 0.0)
                b_new = b - trial * gb
                cand = total_loss(w_new, b_new)
                if cand < current - 1e-15:
                    w, b, current = w_new, b_new, cand
                    step = min(trial * 1.5, 1e3)
                    improved = True
                    break
                trial *= 0.5
            if not improved or trial < 1e-14:
                break
        self.w = w
        self.b = b
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if self.constant is not None:
            return np.full(X.shape[0], self.constant)
        s = _sigmoid(X @ self.w + self.b)
        return self.y_min + (s - _LO) * (self.y_max - self.y_min) / (_HI - _LO)

    def to_params(self):
        return {
            "c": self.c, "penalty": self.penalty,
            "elasticnet_ratio": self.elasticnet_ratio,
            "w": self.w.tolist(), "b": self.b,
            "y_min": self.y_min, "y_max": self.y_max,
            "constant": self.constant,
        }

    @classmethod
    def from_params(cls, params):
        model = cls(c=params["c"], penalty=params["penalty"],
                    elasticnet_ratio=params["elasticnet_ratio"])
        model.w = np.asarray(params["w"], dtype=float)
        model.b = float(params["b"])
        model.y_min = float(params["y_min"])
        model.y_max = float(params["y_max"])
        model.constant = params.get("constant")
        return model
