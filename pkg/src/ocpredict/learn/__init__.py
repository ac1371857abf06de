"""Gradient-boosted trees, case-level splits and evaluation metrics."""

from .boosting import DegenerateModelWarning, GbdtConfig, GbdtModel, ModelError, fit_gbdt
from .protocol import (
    GridResult,
    default_grid,
    expand_grid,
    f1,
    grid_search,
    mae,
    split_cases,
    split_dataset,
    validation_score,
)
from .tree import Binner, Tree, TreeBuilder


def predict(model: GbdtModel, X, fingerprint: str | None = None):
    return model.predict(X, fingerprint)


__all__ = [
    "Binner",
    "DegenerateModelWarning",
    "GbdtConfig",
    "GbdtModel",
    "GridResult",
    "ModelError",
    "Tree",
    "TreeBuilder",
    "default_grid",
    "expand_grid",
    "f1",
    "fit_gbdt",
    "grid_search",
    "mae",
    "predict",
    "split_cases",
    "split_dataset",
    "validation_score",
]
