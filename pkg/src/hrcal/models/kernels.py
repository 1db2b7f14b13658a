"""Kernel functions shared by the SVR and GP regressors.

    poly(x_i, x_j) = (gamma * <x_i, x_j> + 1)^d
    rbf(x_i, x_j)  = exp(-gamma * ||x_i - x_j||^2)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError


@dataclass(frozen=True)
class KernelSpec:
    kind: str  # "rbf" | "poly"
    gamma: float
    degree: int | None = None

    def __post_init__(self):
        if self.kind not in ("rbf", "poly"):
            raise ConfigError(f"unknown kernel {self.kind!r}")
        if not (self.gamma > 0):
            raise ConfigError("gamma must be positive")
        if self.kind == "poly":
            if self.degree is None or int(self.degree) < 2:
                raise ConfigError("poly kernel needs integer degree >= 2")


def kernel_eval(spec: KernelSpec, xi, xj) -> float:
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    if xi.shape != xj.shape:
        raise ShapeError(f"kernel arguments differ in shape: {xi.shape} vs {xj.shape}")
    if spec.kind == "rbf":
        d = xi - xj
        return float(np.exp(-spec.gamma * np.dot(d, d)))
    return float((spec.gamma * np.dot(xi, xj) + 1.0) ** int(spec.degree))


def kernel_matrix(spec: KernelSpec, A, B=None) -> np.ndarray:
    """Gram matrix K[i, j] = k(A[i], B[j]); B defaults to A."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ShapeError(f"feature dimensions differ: {A.shape[1]} vs {B.shape[1]}")
    if spec.kind == "rbf":
        a2 = np.sum(A * A, axis=1)[:, None]
        b2 = np.sum(B * B, axis=1)[None, :]
        sq = np.maximum(a2 + b2 - 2.0 * (A @ B.T), 0.0)
        return np.exp(-spec.gamma * sq)
    return (spec.gamma * (A @ B.T) + 1.0) ** int(spec.degree)
