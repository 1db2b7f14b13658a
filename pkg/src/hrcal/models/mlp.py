"""Shallow fully connected network for regression.

ReLU activations on every hidden layer, a linear output head, and Adam
on half mean-squared error.  Training runs a fixed epoch budget with
optional early stopping on a validation set's mean absolute error.
Forward/backward are exposed as pure functions of the parameter list so
the gradients can be checked against finite differences.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, TrainingError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def init_params(layer_sizes, rng):
    """He-normal weights; small positive biases keep ReLU units live and
    pre-activations off the exact kink.  Returns a flat [W0, b0, W1, ...]."""
    params = []
    n_layers = len(layer_sizes) - 1
    for i, (fan_in, fan_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
        scale = np.sqrt(2.0 / fan_in)
        params.append(rng.normal(0.0, scale, size=(fan_out, fan_in)))
        bias = 0.0 if i == n_layers - 1 else 0.01
        params.append(np.full(fan_out, bias))
    return params


def forward(params, X):
    """Network output and the per-layer activations needed for backprop."""
    a = X
    activations = [a]
    n_layers = len(params) // 2
    for layer in range(n_layers):
        W, b = params[2 * layer], params[2 * layer + 1]
        z = a @ W.T + b
        a = z if layer == n_layers - 1 else np.maximum(z, 0.0)
        activations.append(a)
    return activations[-1][:, 0], activations


def loss_and_grads(params, X, y):
    """Half-MSE loss and gradients for every weight and bias."""
    pred, activations = forward(params, X)
    n = X.shape[0]
    with np.errstate(over="ignore", invalid="ignore"):
        resid = (pred - y) / n
        loss = 0.5 * float(np.sum((pred - y) ** 2)) / n

    grads = [None] * len(params)
    delta = resid[:, None]  # gradient wrt the linear output
    n_layers = len(params) // 2
    for layer in range(n_layers - 1, -1, -1):
        a_prev = activations[layer]
        grads[2 * layer] = delta.T @ a_prev
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer > 0:
            W = params[2 * layer]
            delta = (delta @ W) * (activations[layer] > 0.0)
    return loss, grads


class MlpRegressor:
    def __init__(self, hidden_layer_sizes=(16, 8, 4), learning_rate: float = 0.001,
                 epochs: int = 200, batch_size: int = 32, patience: int = 20,
                 seed: int = 0):
        if not hidden_layer_sizes:
            raise ConfigError("need at least one hidden layer")
        if learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        self.hidden_layer_sizes = tuple(int(h) for h in hidden_layer_sizes)
        self.learning_rate = float(learning_rate)
        self.epochs = int(epochs)
        self.batch_size = int(batch_size)
        self.patience = int(patience)
        self.seed = int(seed)
        self.params = None
        self.y_center = 0.0

    def fit(self, X, y, X_val=None, y_val=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        rng = np.random.default_rng([self.seed, X.shape[0], X.shape[1]])
        sizes = (X.shape[1],) + self.hidden_layer_sizes + (1,)
        self.params = init_params(sizes, rng)
        self.y_center = float(np.mean(y))
        yc = y - self.y_center

        m = [np.zeros_like(p) for p in self.params]
        v = [np.zeros_like(p) for p in self.params]
        step = 0
        best_val, best_params, stale = np.inf, None, 0
        n = X.shape[0]
        for epoch in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                batch = order[start: start + self.batch_size]
                loss, grads = loss_and_grads(self.params, X[batch], yc[batch])
                if not np.isfinite(loss):
                    raise TrainingError(f"loss diverged at epoch {epoch}")
                step += 1
                for i, g in enumerate(grads):
                    m[i] = ADAM_BETA1 * m[i] + (1 - ADAM_BETA1) * g
                    v[i] = ADAM_BETA2 * v[i] + (1 - ADAM_BETA2) * g * g
                    mhat = m[i] / (1 - ADAM_BETA1 ** step)
                    vhat = v[i] / (1 - ADAM_BETA2 ** step)
                    self.params[i] = self.params[i] - self.learning_rate * mhat / (
                        np.sqrt(vhat) + ADAM_EPS)
            if X_val is not None and len(X_val):
                val_mae = float(np.mean(np.abs(self.predict(X_val) - y_val)))
                if val_mae < best_val - 1e-9:
                    best_val = val_mae
                    best_params = [p.copy() for p in self.params]
                    stale = 0
                else:
                    stale += 1
                    if stale >= self.patience:
                        break
        if best_params is not None:
            self.params = best_params
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        pred, _ = forward(self.params, X)
        return pred + self.y_center

    def to_params(self):
        return {
            "hidden_layer_sizes": list(self.hidden_layer_sizes),
            "learning_rate": self.learning_rate,
            "y_center": self.y_center,
            "weights": [p.tolist() for p in self.params],
        }

    @classmethod
    def from_params(cls, params):
        model = cls(hidden_layer_sizes=tuple(params["hidden_layer_sizes"]),
                    learning_rate=params["learning_rate"])
        model.params = [np.asarray(p, dtype=float) for p in params["weights"]]
        model.y_center = float(params["y_center"])
        return model
