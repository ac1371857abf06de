"""Gradient boosting over histogram trees."""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .tree import Binner, Tree, TreeBuilder

MODEL_FORMAT = "ocpredict-gbdt"
MODEL_VERSION = 1


class ModelError(ValueError):
    pass


class DegenerateModelWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GbdtConfig:
    n_trees: int = 200
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 5
    loss: str = "least-squares"
    seed: int = 0
    categorical_strategy: str = "target-mean-order"
    reg_lambda: float = 1.0
    subsample: float = 1.0
    max_bins: int = 255
    patience: int = 30

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValueError("n_trees must be >= 0")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}; choose from {sorted(LOSSES)}")
        if self.categorical_strategy != "target-mean-order":
            raise ValueError("only the target-mean-order categorical strategy is available")

    @property
    def classification(self) -> bool:
        return self.loss == "logistic"


# -- losses --------------------------------------------------------------------------


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class LeastSquares:
    def init(self, y):
        return float(np.mean(y))

    def grad_hess(self, y, f):
        return f - y, np.ones_like(y)

    def leaf(self, y, f, g, h, reg_lambda):
        return -g.sum() / (h.sum() + reg_lambda)

    def loss(self, y, f):
        return float(np.mean((y - f) ** 2))


class Absolute:
    def init(self, y):
        return float(np.median(y))

    def grad_hess(self, y, f):
        return -np.sign(y - f), np.ones_like(y)

    def leaf(self, y, f, g, h, reg_lambda):
        return float(np.median(y - f))

    def loss(self, y, f):
        return float(np.mean(np.abs(y - f)))


class Logistic:
    def init(self, y):
        p = float(np.clip(np.mean(y), 1e-6, 1 - 1e-6))
        return float(np.log(p / (1 - p)))

    def grad_hess(self, y, f):
        p = _sigmoid(f)
        return p - y, np.maximum(p * (1 - p), 1e-12)

    def leaf(self, y, f, g, h, reg_lambda):
        return -g.sum() / (h.sum() + reg_lambda)

    def loss(self, y, f):
        p = np.clip(_sigmoid(f), 1e-12, 1 - 1e-12)
        return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


LOSSES = {"least-squares": LeastSquares(), "absolute": Absolute(), "logistic": Logistic()}


# -- model -----------------------------------------------------------------------------


@dataclass
class GbdtModel:
    base_value: float
    config: GbdtConfig
    trees: list[Tree] = field(default_factory=list)
    feature_names: list[str] = field(default_factory=list)
    categorical: list[bool] = field(default_factory=list)
    categories: dict[str, list[str]] = field(default_factory=dict)
    fingerprint: str = ""
    train_loss: list[float] = field(default_factory=list)
    valid_loss: list[float] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ModelError(f"model expects {self.n_features} features, got {X.shape[1]}")
        out = np.full(X.shape[0], self.base_value)
        lr = self.config.learning_rate
        for t in self.trees:
            out += lr * t.predict(X)
        return out

    def predict(self, X: np.ndarray, fingerprint: str | None = None) -> np.ndarray:
        """Regression values, or positive-class probabilities for the logistic loss."""
        if fingerprint is not None and self.fingerprint and fingerprint != self.fingerprint:
            raise ModelError("feature schema fingerprint does not match the model")
        f = self.decision_function(X)
        return _sigmoid(f) if self.config.classification else f

    def predict_label(self, X: np.ndarray) -> np.ndarray:
        p = self.predict(X)
        return p >= 0.5 if self.config.classification else p

    def used_features(self) -> set[int]:
        return set().union(*(t.used_features() for t in self.trees)) if self.trees else set()

    def to_json(self) -> str:
        doc = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "config": asdict(self.config),
            "base_value": self.base_value,
            "feature_names": self.feature_names,
            "categorical": self.categorical,
            "categories": self.categories,
            "fingerprint": self.fingerprint,
            "trees": [t.to_dict() for t in self.trees],
        }
        return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "GbdtModel":
        doc = json.loads(text)
        if doc.get("format") != MODEL_FORMAT:
            raise ModelError("not a serialized gbdt model")
        if doc.get("version") != MODEL_VERSION:
            raise ModelError(f"unsupported model version {doc.get('version')}")
        return cls(
            base_value=float(doc["base_value"]),
            config=GbdtConfig(**doc["config"]),
            trees=[Tree.from_dict(t) for t in doc["trees"]],
            feature_names=list(doc["feature_names"]),
            categorical=list(doc["categorical"]),
            categories=dict(doc["categories"]),
            fingerprint=doc.get("fingerprint", ""),
        )


def fit_gbdt(
    X: np.ndarray,
    y: np.ndarray,
    config: GbdtConfig = GbdtConfig(),
    X_valid: np.ndarray | None = None,
    y_valid: np.ndarray | None = None,
    categorical: Sequence[bool] | None = None,
    feature_names: Sequence[str] | None = None,
    categories: dict[str, list[str]] | None = None,
    fingerprint: str = "",
    workers: int = 1,
) -> GbdtModel:
    """Boost ``config.n_trees`` trees on negative gradients.

    With a validation set, training stops once the validation loss has not
    improved for ``config.patience`` rounds and the ensemble is cut back to
    its best round.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 0:
        raise ModelError("empty training set")
    categorical = list(categorical) if categorical is not None else [False] * X.shape[1]
    names = list(feature_names) if feature_names is not None else [f"f{j}" for j in range(X.shape[1])]
    loss = LOSSES[config.loss]
    model = GbdtModel(
        base_value=loss.init(y),
        config=config,
        feature_names=names,
        categorical=categorical,
        categories=dict(categories or {}),
        fingerprint=fingerprint,
    )
    if config.classification and np.unique(y).size < 2:
        warnings.warn("single-class target: fitting a constant predictor", DegenerateModelWarning, stacklevel=2)
        return model
    if config.n_trees == 0:
        return model

    binner = Binner(config.max_bins).fit(X, categorical)
    Xb = binner.transform(X)
    builder = TreeBuilder(
        binner, config.max_depth, config.min_samples_leaf, config.reg_lambda, workers=workers
    )
    rng = np.random.default_rng(config.seed)
    f = np.full(y.shape[0], model.base_value)
    has_valid = X_valid is not None and y_valid is not None and len(y_valid) > 0
    if has_valid:
        X_valid = np.asarray(X_valid, dtype=float)
        y_valid = np.asarray(y_valid, dtype=float)
        fv = np.full(y_valid.shape[0], model.base_value)
        best, best_round = loss.loss(y_valid, fv), 0
    lr = config.learning_rate
    for t in range(config.n_trees):
        g, h = loss.grad_hess(y, f)
        if config.subsample < 1.0:
            rows = np.sort(rng.choice(y.shape[0], max(1, int(config.subsample * y.shape[0])), replace=False))
        else:
            rows = np.arange(y.shape[0])

        def leaf_value(idx, rows=rows, g=g, h=h):
            r = rows[idx]
            return loss.leaf(y[r], f[r], g[r], h[r], config.reg_lambda)

        tree, _ = builder.build(Xb[rows], g[rows], h[rows], leaf_value)
        model.trees.append(tree)
        f = f + lr * tree.predict(X)
        model.train_loss.append(loss.loss(y, f))
        if has_valid:
            fv = fv + lr * tree.predict(X_valid)
            vl = loss.loss(y_valid, fv)
            model.valid_loss.append(vl)
            if vl < best - 1e-12:
                best, best_round = vl, t + 1
            elif t + 1 - best_round >= config.patience:
                break
    if has_valid:
        model.trees = model.trees[:best_round]
    return model


def refit_config(model: GbdtModel) -> GbdtConfig:
    """Config reproducing ``model``'s ensemble size without early stopping."""
    return replace(model.config, n_trees=len(model.trees))
