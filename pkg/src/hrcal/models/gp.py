"""Gaussian-process regression with an ARD squared-exponential kernel.

    k(x, x') = exp(-1/2 * sum_d (x_d - x'_d)^2 / l_d^2)

Per-feature length scales are learned by maximizing the log marginal
likelihood with log-parameterized gradient ascent (backtracking step,
a few deterministic restarts).  Inference follows the standard Cholesky
recipe: alpha = (K + aI)^{-1} y via cho_solve, posterior variance from a
triangular solve.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from ..errors import ConfigError, TrainingError

_RESTART_LOG_SCALES = (0.0, 1.0, -1.0)


def _ard_kernel(A, B, length_scales):
    As = A / length_scales
    Bs = B / length_scales
    a2 = np.sum(As * As, axis=1)[:, None]
    b2 = np.sum(Bs * Bs, axis=1)[None, :]
    sq = np.maximum(a2 + b2 - 2.0 * (As @ Bs.T), 0.0)
    return np.exp(-0.5 * sq)


class GpRegressor:
    def __init__(self, alpha: float = 1e-10, optimize_scales: bool = True,
                 max_steps: int = 60):
        if alpha < 0:
            raise ConfigError("alpha must be non-negative")
        self.alpha = float(alpha)
        self.optimize_scales = optimize_scales
        self.max_steps = int(max_steps)
        self.length_scales = None
        self.X_train = None
        self._chol = None
        self._dual = None
        self.y_mean = 0.0
        self.lml = None
        self.lml_trace = []

    # -- log marginal likelihood and its gradient in theta = log(l) --

    def _lml_and_grad(self, X, y, theta):
        ls = np.exp(theta)
        K = _ard_kernel(X, X, ls)
        Kn = K + self.alpha * np.eye(X.shape[0])
        try:
            L = cholesky(Kn, lower=True)
        except np.linalg.LinAlgError:
            return -np.inf, np.zeros_like(theta)
        dual = cho_solve((L, True), y)
        lml = (-0.5 * float(y @ dual)
               - float(np.sum(np.log(np.diag(L))))
               - 0.5 * X.shape[0] * np.log(2.0 * np.pi))
        # d lml / d theta_d = 1/2 tr((dual dual^T - Kn^{-1}) dK/dtheta_d)
        Kinv = cho_solve((L, True), np.eye(X.shape[0]))
        W = np.outer(dual, dual) - Kinv
        grad = np.empty_like(theta)
        for d in range(theta.size):
            diff = X[:, d][:, None] - X[:, d][None, :]
            dK = K * (diff * diff) / (ls[d] ** 2)  # dK/d theta_d
            grad[d] = 0.5 * float(np.sum(W * dK))
        return lml, grad

    def _ascend(self, X, y, theta0):
        theta = theta0.copy()
        lml, grad = self._lml_and_grad(X, y, theta)
        trace = [lml]
        step = 0.1
        for _ in range(self.max_steps):
            gnorm = float(np.max(np.abs(grad)))
            if not np.isfinite(lml) or gnorm < 1e-8:
                break
            improved = False
            trial_step = step
            for _ in range(25):
                cand = theta + trial_step * grad / max(gnorm, 1.0)
                cand_lml, cand_grad = self._lml_and_grad(X, y, cand)
                if cand_lml > lml:
                    theta, lml, grad = cand, cand_lml, cand_grad
                    trace.append(lml)
                    step = min(trial_step * 2.0, 1.0)
                    improved = True
                    break
                trial_step *= 0.5
            if not improved:
                break
        return theta, lml, trace

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.y_mean = float(np.mean(y))
        yc = y - self.y_mean
        d = X.shape[1]

        if self.optimize_scales and X.shape[0] > 2:
            best = None
            for base in _RESTART_LOG_SCALES:
                theta0 = np.full(d, base)
                theta, lml, trace = self._ascend(X, yc, theta0)
                if best is None or lml > best[1]:
                    best = (theta, lml, trace)
            theta, self.lml, self.lml_trace = best
            self.length_scales = np.exp(theta)
        else:
            self.length_scales = np.ones(d)

        K = _ard_kernel(X, X, self.length_scales)
        Kn = K + self.alpha * np.eye(X.shape[0])
        try:
            L = cholesky(Kn, lower=True)
        except np.linalg.LinAlgError as exc:
            raise TrainingError(
                "kernel matrix is not positive definite; raise alpha") from exc
        self.X_train = X
        self._chol = L
        self._dual = cho_solve((L, True), yc)
        if self.lml is None:
            self.lml = (-0.5 * float(yc @ self._dual)
                        - float(np.sum(np.log(np.diag(L))))
                        - 0.5 * X.shape[0] * np.log(2.0 * np.pi))
        return self

    def predict(self, X, return_var: bool = False):
        X = np.asarray(X, dtype=float)
        Ks = _ard_kernel(X, self.X_train, self.length_scales)
        mean = Ks @ self._dual + self.y_mean
        if not return_var:
            return mean
        # Latent-function variance: k(x,x) = 1 under this kernel.
        V = solve_triangular(self._chol, Ks.T, lower=True)
        var = 1.0 - np.sum(V * V, axis=0)
        return mean, var

    def to_params(self):
        return {
            "alpha": self.alpha,
            "length_scales": self.length_scales.tolist(),
            "X_train": self.X_train.tolist(),
            "dual": self._dual.tolist(),
            "chol": self._chol.tolist(),
            "y_mean": self.y_mean,
        }

    @classmethod
    def from_params(cls, params):
        model = cls(alpha=params["alpha"], optimize_scales=False)
        model.length_scales = np.asarray(params["length_scales"], dtype=float)
        model.X_train = np.asarray(params["X_train"], dtype=float)
        model._dual = np.asarray(params["dual"], dtype=float)
        model._chol = np.asarray(params["chol"], dtype=float)
        model.y_mean = float(params["y_mean"])
        return model
