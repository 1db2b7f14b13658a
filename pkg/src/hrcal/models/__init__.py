"""From-scratch regressors sharing a fit/predict surface.

Each algorithm lives in its own module; ``base`` provides the common
ModelSpec / TrainedModel types, the hyperparameter grids, and the text
serialization format.
"""

from .base import (ModelSpec, TrainedModel, load_model, make_model,
                   save_model, table_grid)
from .kernels import KernelSpec, kernel_eval, kernel_matrix

__all__ = [
    "ModelSpec", "TrainedModel", "make_model", "save_model", "load_model",
    "table_grid", "KernelSpec", "kernel_eval", "kernel_matrix",
]
