"""Epsilon-insensitive support vector regression via SMO.

The dual, written over u = [alpha; alpha*] with signs s = [+1...; -1...]:

    minimize  D(u) = 1/2 u^T Q u + p^T u
    s.t.      s^T u = 0,   0 <= u <= C

where Q[a, b] = s_a s_b K[a mod n, b mod n] and p = [eps - y; eps + y].
The solver picks the maximal-violating pair each iteration, takes the
analytic two-variable step, clips to the box, and maintains the gradient
incrementally.  Optimality is declared when the violation gap drops below
the KKT tolerance.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ConvergenceError, InsufficientDataError
from .kernels import KernelSpec, kernel_matrix


class EpsilonSvr:
    def __init__(self, kernel: KernelSpec, c: float = 1.0, epsilon: float = 0.1,
                 tol: float = 1e-3, max_iter: int = 100_000):
        if c <= 0:
            raise ConfigError("C must be positive")
        if epsilon < 0:
            raise ConfigError("epsilon must be non-negative")
        self.kernel = kernel
        self.c = float(c)
        self.epsilon = float(epsilon)
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self.beta = None
        self.bias = 0.0
        self.X_train = None
        self.dual_objective = None
        self.iterations = 0

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n = X.shape[0]
        if n < 2:
            raise InsufficientDataError("SVR needs at least 2 training points")
        K = kernel_matrix(self.kernel, X)
        C, eps = self.c, self.epsilon

        u = np.zeros(2 * n)
        s = np.concatenate([np.ones(n), -np.ones(n)])
        p = np.concatenate([eps - y, eps + y])
        G = p.copy()  # gradient of D at u = 0
        ms = -s  # -s_a, reused every iteration

        converged = False
        it = 0
        for it in range(1, self.max_iter + 1):
            crit = ms * G
            up = np.where(s > 0, u < C, u > 0)
            low = np.where(s > 0, u > 0, u < C)
            crit_up = np.where(up, crit, -np.inf)
            crit_low = np.where(low, crit, np.inf)
            i = int(np.argmax(crit_up))
            j = int(np.argmin(crit_low))
            m_val = crit_up[i]
            M_val = crit_low[j]
            if m_val - M_val <= self.tol:
                converged = True
                break

            ii, jj = i % n, j % n
            eta = K[ii, ii] + K[jj, jj] - 2.0 * K[ii, jj]
            # Feasible direction: u_i += s_i*lam, u_j -= s_j*lam (lam > 0).
            lam_box = min(C - u[i] if s[i] > 0 else u[i],
                          u[j] if s[j] > 0 else C - u[j])
            if eta > 1e-12:
                lam = min((m_val - M_val) / eta, lam_box)
            else:
                lam = lam_box
            if lam <= 0:
                converged = True  # numerically stuck at a box corner
                break
            u[i] += s[i] * lam
            u[j] -= s[j] * lam
            d = lam * (K[:, ii] - K[:, jj])
            G[:n] += d
            G[n:] -= d

        self.iterations = it
        beta = u[:n] - u[n:]
        self.beta = beta
        self.X_train = X
        self.dual_objective = float(0.5 * (u @ G + u @ p))

        # Bias from free support vectors: b = -s_a G_a at any 0 < u_a < C.
        free = (u > 1e-8) & (u < C - 1e-8)
        if np.any(free):
            self.bias = float(np.mean((ms * G)[free]))
        else:
            crit = ms * G
            up = np.where(s > 0, u < C, u > 0)
            low = np.where(s > 0, u > 0, u < C)
            hi = np.max(np.where(up, crit, -np.inf))
            lo = np.min(np.where(low, crit, np.inf))
            self.bias = float((hi + lo) / 2.0)

        self._u = u
        if not converged:
            raise ConvergenceError(
                f"SMO hit max_iter={self.max_iter} with gap {m_val - M_val:.3e}",
                model=self)
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        active = np.abs(self.beta) > 0
        if not np.any(active):
            return np.full(X.shape[0], self.bias)
        Kx = kernel_matrix(self.kernel, X, self.X_train[active])
        return Kx @ self.beta[active] + self.bias

    def dual_feasibility(self):
        """(max box violation, sum of signed duals) for invariant checks."""
        u = self._u
        box = max(float(np.max(-u, initial=0.0)),
                  float(np.max(u - self.c, initial=0.0)))
        return box, float(np.sum(self.beta))

    def to_params(self):
        return {
            "kernel": {"kind": self.kernel.kind, "gamma": self.kernel.gamma,
                       "degree": self.kernel.degree},
            "c": self.c, "epsilon": self.epsilon, "tol": self.tol,
            "beta": self.beta.tolist(), "bias": self.bias,
            "X_train": self.X_train.tolist(),
            "dual_objective": self.dual_objective,
        }

    @classmethod
    def from_params(cls, params):
        kspec = params["kernel"]
        model = cls(KernelSpec(kspec["kind"], kspec["gamma"], kspec["degree"]),
                    c=params["c"], epsilon=params["epsilon"], tol=params["tol"])
        model.beta = np.asarray(params["beta"], dtype=float)
        model.bias = float(params["bias"])
        model.X_train = np.asarray(params["X_train"], dtype=float)
        model.dual_objective = params.get("dual_objective")
        return model
