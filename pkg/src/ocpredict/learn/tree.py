"""Histogram regression trees fitted to gradient statistics."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

LEAF = -1


class Binner:
    """Maps raw feature columns to small integer bins.

    Numeric thresholds sit at midpoints between consecutive distinct training
    values (subsampled by quantile when there are more than ``max_bins``), so
    a split on bin ``t`` is the raw test ``x < thresholds[t]``. Categorical
    columns already hold integer codes and are used as bins directly. The last
    column of every histogram is reserved for missing values.
    """

    def __init__(self, max_bins: int = 255):
        self.max_bins = max_bins
        self.thresholds: list[np.ndarray] = []
        self.n_bins: list[int] = []
        self.width = 1

    def fit(self, X: np.ndarray, categorical: list[bool]) -> "Binner":
        self.categorical = list(categorical)
        self.thresholds, self.n_bins = [], []
        for j in range(X.shape[1]):
            col = X[:, j]
            col = col[~np.isnan(col)]
            if self.categorical[j]:
                self.thresholds.append(np.empty(0))
                self.n_bins.append(int(col.max()) + 1 if col.size else 1)
                continue
            uniq = np.unique(col)
            if uniq.size <= 1:
                thr = np.empty(0)
            else:
                mids = (uniq[:-1] + uniq[1:]) / 2.0
                if mids.size > self.max_bins - 1:
                    qs = np.quantile(col, np.linspace(0, 1, self.max_bins + 1)[1:-1])
                    pick = np.unique(np.clip(np.searchsorted(mids, qs), 0, mids.size - 1))
                    mids = mids[pick]
                thr = mids
            self.thresholds.append(thr)
            self.n_bins.append(thr.size + 1)
        self.width = max(self.n_bins, default=1) + 1
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape, dtype=np.int32)
        miss = self.width - 1
        for j in range(X.shape[1]):
            col = X[:, j]
            nan = np.isnan(col)
            if self.categorical[j]:
                b = np.where(nan, miss, col).astype(np.int64)
                b[(b >= self.n_bins[j]) & ~nan] = miss
            else:
                b = np.searchsorted(self.thresholds[j], np.where(nan, 0.0, col), side="right")
                b[nan] = miss
            out[:, j] = b
        return out


@dataclass
class Tree:
    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    missing_left: list[bool] = field(default_factory=list)
    value: list[float] = field(default_factory=list)
    categories: dict[int, list[int]] = field(default_factory=dict)

    def add_leaf(self, value: float = 0.0) -> int:
        self.feature.append(LEAF)
        self.threshold.append(float("nan"))
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.missing_left.append(False)
        self.value.append(float(value))
        return len(self.feature) - 1

    @property
    def depth(self) -> int:
        depth = {0: 0}
        for n, (l, r) in enumerate(zip(self.left, self.right)):
            if l != LEAF:
                depth[l] = depth[r] = depth[n] + 1
        return max(depth.values())

    def used_features(self) -> set[int]:
        return {f for f in self.feature if f != LEAF}

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of a raw feature matrix."""
        feature = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        mleft = np.asarray(self.missing_left)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        for _ in range(self.depth):
            f = feature[node]
            active = f != LEAF
            if not active.any():
                break
            x = X[rows, np.where(active, f, 0)]
            nan = np.isnan(x)
            go_left = np.where(nan, mleft[node], x < thr[node])
            for n, cats in self.categories.items():
                sel = node == n
                if sel.any():
                    go_left[sel] = np.where(nan[sel], mleft[n], np.isin(x[sel], cats))
            node = np.where(active, np.where(go_left, left[node], right[node]), node)
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.value)[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "threshold": [None if np.isnan(t) else float(t) for t in self.threshold],
            "left": self.left,
            "right": self.right,
            "missing_left": self.missing_left,
            "value": self.value,
            "categories": {str(k): v for k, v in sorted(self.categories.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            list(d["feature"]),
            [float("nan") if t is None else float(t) for t in d["threshold"]],
            list(d["left"]),
            list(d["right"]),
            list(d["missing_left"]),
            [float(v) for v in d["value"]],
            {int(k): list(v) for k, v in d.get("categories", {}).items()},
        )


@dataclass
class _Split:
    gain: float
    feature: int
    threshold_bin: int = -1
    left_bins: np.ndarray | None = None
    missing_left: bool = False


class TreeBuilder:
    def __init__(
        self,
        binner: Binner,
        max_depth: int = 3,
        min_samples_leaf: int = 1,
        reg_lambda: float = 1.0,
        min_split_gain: float = 0.0,
        workers: int = 1,
    ):
        self.binner = binner
        self.max_depth = max_depth
        self.min_samples_leaf = max(1, int(min_samples_leaf))
        self.reg_lambda = reg_lambda
        self.min_split_gain = min_split_gain
        self.workers = max(1, int(workers))

    def _score(self, G, H):
        return G * G / (H + self.reg_lambda)

    def _best_in_chunk(self, Xb_node, cols, g, h) -> _Split | None:
        W = self.binner.width
        n, k = Xb_node.shape
        flat = (Xb_node + (np.arange(k) * W)[None, :]).ravel()
        Gh = np.bincount(flat, weights=np.repeat(g, k), minlength=k * W).reshape(k, W)
        Hh = np.bincount(flat, weights=np.repeat(h, k), minlength=k * W).reshape(k, W)
        Nh = np.bincount(flat, minlength=k * W).reshape(k, W)
        Gt, Ht = g.sum(), h.sum()
        parent = self._score(Gt, Ht)
        msl = self.min_samples_leaf
        best: _Split | None = None
        for c, j in enumerate(cols):
            nb = self.binner.n_bins[j]
            if nb < 2:
                continue
            Gb, Hb, Nb = Gh[c, :nb], Hh[c, :nb], Nh[c, :nb]
            Gm, Hm, Nm = Gh[c, W - 1], Hh[c, W - 1], Nh[c, W - 1]
            order = None
            if self.binner.categorical[j]:
                present = np.flatnonzero(Nb)
                if present.size < 2:
                    continue
                ratio = Gb[present] / (Hb[present] + self.reg_lambda)
                order = present[np.argsort(ratio, kind="stable")]
                Gb, Hb, Nb = Gb[order], Hb[order], Nb[order]
            GL, HL, NL = np.cumsum(Gb)[:-1], np.cumsum(Hb)[:-1], np.cumsum(Nb)[:-1]
            for miss_left in (False, True):
                gl = GL + Gm if miss_left else GL
                hl = HL + Hm if miss_left else HL
                nl = NL + Nm if miss_left else NL
                nr = n - nl
                gain = self._score(gl, hl) + self._score(Gt - gl, Ht - hl) - parent
                ok = (nl >= msl) & (nr >= msl) & (NL > 0) & (NL < n - Nm)
                if not ok.any():
                    continue
                gain = np.where(ok, gain, -np.inf)
                t = int(np.argmax(gain))
                if best is None or gain[t] > best.gain:
                    if Nm == 0:
                        ml = bool(nl[t] >= nr[t])
                    else:
                        ml = miss_left
                    left_bins = order[: t + 1] if order is not None else None
                    best = _Split(float(gain[t]), j, t, left_bins, ml)
                if Nm == 0:
                    break
        return best

    def _best_split(self, Xb_node, g, h) -> _Split | None:
        F = Xb_node.shape[1]
        if self.workers == 1 or F < 2:
            return self._best_in_chunk(Xb_node, range(F), g, h)
        chunks = [c for c in np.array_split(np.arange(F), min(self.workers, F)) if c.size]
        with ThreadPoolExecutor(len(chunks)) as pool:
            found = list(pool.map(lambda c: self._best_in_chunk(Xb_node[:, c], list(c), g, h), chunks))
        best = None
        for s in found:  # chunks are in feature order; strict > keeps the lowest index on ties
            if s is not None and (best is None or s.gain > best.gain):
                best = s
        return best

    def build(self, Xb: np.ndarray, g: np.ndarray, h: np.ndarray, leaf_value) -> tuple[Tree, np.ndarray]:
        """Grow one tree depth-first; returns it and each row's leaf index.

        ``leaf_value(rows)`` gives the output of a leaf holding those rows.
        """
        tree = Tree()
        leaf_of = np.zeros(Xb.shape[0], dtype=np.int64)
        root = tree.add_leaf()
        stack = [(root, np.arange(Xb.shape[0]), 0)]
        while stack:
            node, rows, depth = stack.pop()
            split = None
            if depth < self.max_depth and rows.size >= 2 * self.min_samples_leaf:
                split = self._best_split(Xb[rows], g[rows], h[rows])
            if split is None or not split.gain > self.min_split_gain + 1e-12:
                tree.value[node] = float(leaf_value(rows))
                leaf_of[rows] = node
                continue
            j = int(split.feature)
            col = Xb[rows, j]
            miss = col == self.binner.width - 1
            if split.left_bins is not None:
                go_left = np.isin(col, split.left_bins)
                tree.categories[node] = [int(c) for c in np.sort(split.left_bins)]
                tree.threshold[node] = float("nan")
            else:
                go_left = col <= split.threshold_bin
                tree.threshold[node] = float(self.binner.thresholds[j][split.threshold_bin])
            go_left = np.where(miss, split.missing_left, go_left)
            tree.feature[node] = j
            tree.missing_left[node] = split.missing_left
            l, r = tree.add_leaf(), tree.add_leaf()
            tree.left[node], tree.right[node] = l, r
            stack.append((r, rows[~go_left], depth + 1))
            stack.append((l, rows[go_left], depth + 1))
        return tree, leaf_of
