"""Case-level splitting, metrics and hyperparameter search."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .boosting import GbdtConfig, GbdtModel, fit_gbdt, refit_config


def split_cases(
    case_ids: Iterable[str], seed: int, test_fraction: float = 1 / 3, validation_fraction: float = 0.2
) -> tuple[list[str], list[str], list[str]]:
    """Shuffle distinct case ids and cut them into train, validation and test."""
    cases = sorted(set(case_ids))
    n = len(cases)
    if n < 3:
        raise ValueError(f"need at least 3 cases to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [cases[k] for k in order]
    n_fit = min(n - 1, max(2, int(round(n * (1 - test_fraction)))))
    n_valid = max(1, int(round(n_fit * validation_fraction)))
    if n_fit - n_valid < 1:
        raise ValueError("too few cases for a non-empty training partition")
    fit, test = shuffled[:n_fit], shuffled[n_fit:]
    return fit[n_valid:], fit[:n_valid], test


def split_dataset(instances, seed: int, test_fraction: float = 1 / 3, validation_fraction: float = 0.2):
    """Partition instances by case id; every prefix of a case lands in one part."""
    train, valid, test = split_cases((x.case_id for x in instances), seed, test_fraction, validation_fraction)
    where = {c: 0 for c in train} | {c: 1 for c in valid} | {c: 2 for c in test}
    parts: tuple[list, list, list] = ([], [], [])
    for x in instances:
        parts[where[x.case_id]].append(x)
    return parts


def mae(predictions: Sequence[float], actuals: Sequence[float]) -> float:
    p = np.asarray(predictions, dtype=float)
    a = np.asarray(actuals, dtype=float)
    if p.size == 0 or p.shape != a.shape:
        raise ValueError("mae needs two non-empty vectors of equal length")
    return float(np.mean(np.abs(p - a)))


def f1(predicted: Sequence[bool], actual: Sequence[bool]) -> float:
    p = np.asarray(predicted, dtype=bool)
    a = np.asarray(actual, dtype=bool)
    if p.size == 0 or p.shape != a.shape:
        raise ValueError("f1 needs two non-empty vectors of equal length")
    tp = int(np.sum(p & a))
    fp = int(np.sum(p & ~a))
    fn = int(np.sum(~p & a))
    if tp == 0:
        return 0.0
    precision, recall = tp / (tp + fp), tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def validation_score(model: GbdtModel, X: np.ndarray, y: np.ndarray) -> float:
    """Lower is better: MAE for regression, 1 - F1 for classification."""
    if model.config.classification:
        return 1.0 - f1(model.predict_label(X), np.asarray(y, dtype=bool))
    return mae(model.predict(X), y)


def expand_grid(base: GbdtConfig = GbdtConfig(), **axes) -> list[GbdtConfig]:
    """Cartesian product of config fields, first axis varying slowest."""
    keys = list(axes)
    return [replace(base, **dict(zip(keys, combo))) for combo in itertools.product(*(axes[k] for k in keys))]


def default_grid(base: GbdtConfig = GbdtConfig()) -> list[GbdtConfig]:
    return expand_grid(base, max_depth=[3, 6], n_trees=[200], learning_rate=[0.05, 0.1], min_samples_leaf=[5, 20])


@dataclass
class GridResult:
    config: GbdtConfig
    model: GbdtModel
    scores: list[float]


def grid_search(train, validation, grid: Sequence[GbdtConfig], refit: bool = True, workers: int = 1, **fit_kw) -> GridResult:
    """Pick the config with the lowest validation score (first wins ties).

    ``train`` and ``validation`` are ``(X, y)`` pairs. The winner is refit on
    train + validation with its early-stopped number of trees.
    """
    if not grid:
        raise ValueError("empty hyperparameter grid")
    X_tr, y_tr = train
    X_va, y_va = validation
    scores, models = [], []
    for cfg in grid:
        model = fit_gbdt(X_tr, y_tr, cfg, X_va, y_va, workers=workers, **fit_kw)
        scores.append(validation_score(model, X_va, y_va))
        models.append(model)
    best = int(np.argmin(scores))
    model = models[best]
    if refit:
        X_all = np.vstack([X_tr, X_va])
        y_all = np.concatenate([np.asarray(y_tr, float), np.asarray(y_va, float)])
        model = fit_gbdt(X_all, y_all, refit_config(model), workers=workers, **fit_kw)
    return GridResult(grid[best], model, scores)
