"""Model specs, construction, tuning grids, and text serialization.

A ModelSpec names an algorithm and its hyperparameters; make_model turns
one into a fresh estimator.  TrainedModel bundles a fitted estimator with
its feature names and scaler statistics and round-trips through a
versioned JSON text format (``hrcal-model/1``) so training and evaluation
can run in separate invocations.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, IoError, ShapeError
from .forest import ForestRegressor
from .gp import GpRegressor
from .kernels import KernelSpec
from .knn import KnnRegressor
from .mlp import MlpRegressor
from .sigmoid_lr import SigmoidRegressor
from .svr import EpsilonSvr

FORMAT_TAG = "hrcal-model/1"

ALGORITHMS = ("svr_rbf", "svr_poly", "rf", "gp", "mlp", "sigmoid_lr", "knn")


@dataclass(frozen=True)
class ModelSpec:
    algorithm: str
    params: tuple  # sorted (name, value) pairs; hashable for grid bookkeeping

    @classmethod
    def make(cls, algorithm, **params):
        if algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {algorithm!r}")
        return cls(algorithm, tuple(sorted(params.items())))

    @property
    def pdict(self):
        return dict(self.params)

    def label(self):
        inner = ";".join(f"{k}={v}" for k, v in self.params)
        return f"{self.algorithm}({inner})"


def make_model(spec: ModelSpec, seed: int = 0):
    p = spec.pdict
    if spec.algorithm == "svr_rbf":
        return EpsilonSvr(KernelSpec("rbf", p["gamma"]), c=p["c"],
                          epsilon=p["epsilon"],
                          max_iter=int(p.get("max_iter", 100_000)))
    if spec.algorithm == "svr_poly":
        return EpsilonSvr(KernelSpec("poly", p["gamma"], int(p["degree"])),
                          c=p["c"], epsilon=p["epsilon"],
                          max_iter=int(p.get("max_iter", 100_000)))
    if spec.algorithm == "rf":
        return ForestRegressor(n_estimators=int(p["n_estimators"]),
                               max_features=int(p["max_features"]),
                               max_depth=int(p["max_depth"]),
                               min_samples_split=int(p["min_samples_split"]),
                               min_samples_leaf=int(p["min_samples_leaf"]),
                               seed=seed)
    if spec.algorithm == "gp":
        return GpRegressor(alpha=p["alpha"],
                           optimize_scales=bool(p.get("optimize_scales", True)))
    if spec.algorithm == "mlp":
        return MlpRegressor(hidden_layer_sizes=tuple(p["hidden_layer_sizes"]),
                            learning_rate=p["learning_rate"], seed=seed)
    if spec.algorithm == "sigmoid_lr":
        return SigmoidRegressor(c=p["c"], penalty=p["penalty"])
    if spec.algorithm == "knn":
        return KnnRegressor(n_neighbors=int(p["n_neighbors"]),
                            power=int(p["power"]))
    raise ConfigError(f"unknown algorithm {spec.algorithm!r}")


_MODEL_CLASSES = {
    "svr_rbf": EpsilonSvr, "svr_poly": EpsilonSvr, "rf": ForestRegressor,
    "gp": GpRegressor, "mlp": MlpRegressor, "sigmoid_lr": SigmoidRegressor,
    "knn": KnnRegressor,
}


# ---------------------------------------------------------------------------
# Published tuning grids (values as printed; subset via config in practice)

GRID_VALUES = {
    "svr_rbf": {
        "c": (0.001, 0.01, 0.1, 1.0, 10.0, 100.0),
        "epsilon": (0.001, 0.01, 0.1, 1.0, 10.0, 100.0),
        "gamma": (0.001, 0.01, 0.1, 1.0, 10.0, 100.0),
    },
    "svr_poly": {
        "c": (0.001, 0.01, 0.1, 1.0, 10.0, 100.0),
        "epsilon": (0.001, 0.01, 0.1, 1.0, 10.0, 100.0),
        "gamma": (0.001, 0.01, 0.1, 1.0, 10.0, 100.0),
        "degree": (2, 3, 4, 5),
    },
    "rf": {
        "max_features": (1, 2, 3),
        "n_estimators": tuple(range(200, 2001, 4)),
        "max_depth": tuple(range(10, 50, 3)),
        "min_samples_split": tuple(range(2, 15, 3)),
        "min_samples_leaf": tuple(range(2, 15, 3)),
    },
    "gp": {"alpha": (1e-10, 1e-7, 1e-5, 1e-3, 1e-1, 1.0)},
    "mlp": {
        "hidden_layer_sizes": ((16, 8, 2), (16, 8, 4), (8, 4, 2),
                               (16, 8, 4, 2), (8, 4, 4, 2),
                               (16, 8, 4, 4, 2), (32, 16, 8, 4, 2)),
        "learning_rate": (0.01, 0.001, 0.0001),
    },
    "sigmoid_lr": {
        "c": (0.001, 0.01, 0.1, 1.0, 10.0, 100.0),
        "penalty": ("l1", "l2", "elasticnet"),
    },
    "knn": {
        "n_neighbors": (10, 20, 30, 40, 50, 100, 150, 200, 500, 1000),
        "power": (1, 2, 3),
    },
}


def table_grid(algorithm: str, overrides: dict | None = None):
    """Cartesian product of grid values for one algorithm.

    overrides replaces the value list of individual hyperparameters,
    letting configs run small, tractable subsets.
    """
    if algorithm not in GRID_VALUES:
        raise ConfigError(f"no grid for algorithm {algorithm!r}")
    values = dict(GRID_VALUES[algorithm])
    for key, vals in (overrides or {}).items():
        if key not in values:
            raise ConfigError(f"{algorithm} has no hyperparameter {key!r}")
        values[key] = tuple(vals)
    names = sorted(values)
    specs = []
    for combo in itertools.product(*(values[n] for n in names)):
        specs.append(ModelSpec.make(algorithm, **dict(zip(names, combo))))
    return specs


# ---------------------------------------------------------------------------
# Trained-model bundle


@dataclass
class TrainedModel:
    algorithm: str
    model: object
    feature_names: list
    scaler: object | None = None  # features.ScalerStats
    metadata: dict = field(default_factory=dict)

    def predict(self, X, feature_names=None):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ShapeError(
                f"expected {len(self.feature_names)} features, got shape {X.shape}")
        if feature_names is not None and list(feature_names) != list(self.feature_names):
            raise ShapeError("feature names do not match the training layout")
        return self.model.predict(X)


def save_model(trained: TrainedModel, path):
    doc = {
        "format": FORMAT_TAG,
        "algorithm": trained.algorithm,
        "feature_names": list(trained.feature_names),
        "metadata": trained.metadata,
        "params": trained.model.to_params(),
    }
    if trained.scaler is not None:
        sc = trained.scaler
        doc["scaler"] = {
            "columns": list(sc.columns),
            "mean": np.asarray(sc.mean).tolist(),
            "std": np.asarray(sc.std).tolist(),
            "constant": np.asarray(sc.constant).astype(int).tolist(),
        }
    try:
        Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_model(path) -> TrainedModel:
    from ..features import ScalerStats

    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if doc.get("format") != FORMAT_TAG:
        raise ConfigError(f"{path}: unknown model format {doc.get('format')!r}")
    algorithm = doc["algorithm"]
    model = _MODEL_CLASSES[algorithm].from_params(doc["params"])
    scaler = None
    if "scaler" in doc:
        sc = doc["scaler"]
        scaler = ScalerStats(list(sc["columns"]),
                             np.asarray(sc["mean"], dtype=float),
                             np.asarray(sc["std"], dtype=float),
                             np.asarray(sc["constant"], dtype=bool))
    return TrainedModel(algorithm=algorithm, model=model,
                        feature_names=list(doc["feature_names"]),
                        scaler=scaler, metadata=doc.get("metadata", {}))
