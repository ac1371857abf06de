"""Shapley attributions, feature discretization and boxplot export."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .ingest import format_value
from .model import MISSING


class ExplainError(ValueError):
    pass


@dataclass
class ShapleyVector:
    values: np.ndarray
    base_value: float
    prediction: float

    @property
    def residual(self) -> float:
        """Efficiency gap: prediction - base - sum(values)."""
        return self.prediction - self.base_value - float(np.sum(self.values))


def _as_fn(model) -> Callable[[np.ndarray], np.ndarray]:
    if hasattr(model, "predict"):
        return lambda X: np.asarray(model.predict(X), dtype=float)
    return lambda X: np.asarray(model(X), dtype=float)


def sample_background(X: np.ndarray, n: int = 500, seed: int = 0) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[0] <= n:
        return X
    idx = np.sort(np.random.default_rng(seed).choice(X.shape[0], n, replace=False))
    return X[idx]


def exact_shapley(model, x: np.ndarray, background: np.ndarray, max_features: int = 12, chunk_rows: int = 200_000) -> ShapleyVector:
    """Enumerate every coalition; val(S) is the background mean with S fixed to x."""
    f = _as_fn(model)
    x = np.asarray(x, dtype=float).ravel()
    B = np.asarray(background, dtype=float)
    p = x.size
    if p > max_features:
        raise ExplainError(f"{p} features exceed exact limit {max_features}; use mc_shapley")
    if B.shape[0] == 0:
        raise ExplainError("empty background")
    n_masks = 1 << p
    bits = (np.arange(n_masks)[:, None] >> np.arange(p)[None, :]) & 1
    val = np.empty(n_masks)
    per = max(1, chunk_rows // B.shape[0])
    for start in range(0, n_masks, per):
        m = bits[start : start + per].astype(bool)
        rows = np.where(m[:, None, :], x[None, None, :], B[None, :, :])
        val[start : start + m.shape[0]] = f(rows.reshape(-1, p)).reshape(m.shape[0], -1).mean(axis=1)
    size = bits.sum(axis=1)
    weight = np.array([math.factorial(s) * math.factorial(p - s - 1) / math.factorial(p) for s in range(p)])
    phi = np.zeros(p)
    for i in range(p):
        without = np.flatnonzero(bits[:, i] == 0)
        phi[i] = math.fsum(weight[size[without]] * (val[without | (1 << i)] - val[without]))
    return ShapleyVector(phi, float(val[0]), float(val[-1]))


def mc_shapley(model, x: np.ndarray, background: np.ndarray, n_permutations: int = 1000, seed: int = 0, batch: int = 256) -> ShapleyVector:
    """Permutation-sampling estimate of the marginal Shapley values.

    Each sampled permutation is paired with one background row (rows are
    drawn by cycling through seeded shuffles of the background) and every
    feature is credited with its marginal change when switched from the
    background value to ``x`` after its predecessors.
    """
    if n_permutations < 1:
        raise ExplainError("n_permutations must be >= 1")
    f = _as_fn(model)
    x = np.asarray(x, dtype=float).ravel()
    B = np.asarray(background, dtype=float)
    if B.shape[0] == 0:
        raise ExplainError("empty background")
    p = x.size
    rng = np.random.default_rng(seed)
    reps = -(-n_permutations // B.shape[0])
    z_idx = np.concatenate([rng.permutation(B.shape[0]) for _ in range(reps)])[:n_permutations]
    perms = np.argsort(rng.random((n_permutations, p)), axis=1)
    total = np.zeros(p)
    for s in range(0, n_permutations, batch):
        P = perms[s : s + batch]
        Z = B[z_idx[s : s + batch]]
        k = P.shape[0]
        # rank[r, j] = position of feature j in permutation r
        rank = np.argsort(P, axis=1)
        steps = np.arange(p + 1)
        on = rank[:, None, :] < steps[None, :, None]
        rows = np.where(on, x[None, None, :], Z[:, None, :])
        out = f(rows.reshape(-1, p)).reshape(k, p + 1)
        delta = np.diff(out, axis=1)
        np.add.at(total, P.ravel(), delta.ravel())
    base = float(np.mean(f(B)))
    return ShapleyVector(total / n_permutations, base, float(f(x[None, :])[0]))


def shapley(model, x, background, max_features: int = 12, n_permutations: int = 1000, seed: int = 0) -> ShapleyVector:
    x = np.asarray(x, dtype=float).ravel()
    if x.size <= max_features:
        return exact_shapley(model, x, background, max_features)
    return mc_shapley(model, x, background, n_permutations, seed)


# -- discretization ---------------------------------------------------------------


def _best_cut(v: np.ndarray, y: np.ndarray, lo: int, hi: int, min_leaf: int):
    """Best SSE-reducing cut of the sorted slice [lo, hi) between distinct values."""
    ys = y[lo:hi]
    n = ys.size
    if n < 2 * min_leaf:
        return None
    cs = np.cumsum(ys)
    cs2 = np.cumsum(ys * ys)
    k = np.arange(1, n)
    sse_l = cs2[:-1] - cs[:-1] ** 2 / k
    sse_r = (cs2[-1] - cs2[:-1]) - (cs[-1] - cs[:-1]) ** 2 / (n - k)
    parent = cs2[-1] - cs[-1] ** 2 / n
    gain = parent - sse_l - sse_r
    vs = v[lo:hi]
    valid = (vs[1:] > vs[:-1]) & (k >= min_leaf) & (n - k >= min_leaf)
    if not valid.any():
        return None
    gain = np.where(valid, gain, -np.inf)
    c = int(np.argmax(gain))
    if not gain[c] > 1e-12 * max(1.0, parent):
        return None
    return float(gain[c]), lo + c + 1, (vs[c] + vs[c + 1]) / 2.0


def discretize_feature(values: Sequence[float], labels: Sequence[float], max_buckets: int = 5, min_samples_leaf: int = 1) -> list[float]:
    """Thresholds from a best-first regression tree on one feature (at most ``max_buckets`` leaves)."""
    v = np.asarray(values, dtype=float)
    y = np.asarray(labels, dtype=float)
    keep = ~np.isnan(v)
    v, y = v[keep], y[keep]
    if v.size < 2:
        return []
    order = np.argsort(v, kind="stable")
    v, y = v[order], y[order]
    leaves = [(0, v.size)]
    cuts: dict[tuple[int, int], Any] = {leaves[0]: _best_cut(v, y, 0, v.size, min_samples_leaf)}
    thresholds: list[float] = []
    while len(leaves) < max_buckets:
        cands = [(cuts[lf][0], lf) for lf in leaves if cuts[lf] is not None]
        if not cands:
            break
        _, leaf = max(cands, key=lambda c: (c[0], -c[1][0]))
        _, mid, thr = cuts[leaf]
        thresholds.append(thr)
        leaves.remove(leaf)
        for new in ((leaf[0], mid), (mid, leaf[1])):
            leaves.append(new)
            cuts[new] = _best_cut(v, y, new[0], new[1], min_samples_leaf)
    return sorted(thresholds)


# -- buckets ----------------------------------------------------------------------


@dataclass
class ExplanationBucket:
    feature: str
    label: str
    lower: float | None = None
    upper: float | None = None
    value: Any = None
    samples: list[float] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.samples)) if self.samples else 0.0

    def contains(self, v) -> bool:
        if self.value is not None:
            return _value_key(v) == self.value
        if v is MISSING or v is None or (isinstance(v, float) and math.isnan(v)):
            return False
        return (self.lower is None or v >= self.lower) and (self.upper is None or v < self.upper)


def _value_key(v) -> str:
    if v is MISSING or v is None or (isinstance(v, float) and math.isnan(v)):
        return "missing"
    return format_value(v)


def _fmt(t: float) -> str:
    return format_value(float(round(t, 6)))


def interval_label(name: str, thresholds: Sequence[float], k: int) -> str:
    if not thresholds:
        return f"{name} (all)"
    if k == 0:
        return f"{name} < {_fmt(thresholds[0])}"
    if k == len(thresholds):
        return f"{name} >= {_fmt(thresholds[-1])}"
    return f"{_fmt(thresholds[k - 1])} <= {name} < {_fmt(thresholds[k])}"


def aggregate_explanations(
    shapley_values: Sequence[Sequence[float]] | np.ndarray,
    feature_values: Sequence[Sequence[Any]],
    feature_names: Sequence[str],
    thresholds: dict[str, Sequence[float]],
    categorical: Sequence[bool] | None = None,
) -> list[ExplanationBucket]:
    """Route every (prefix, feature) Shapley sample to its bucket.

    Numeric features use the intervals induced by ``thresholds`` (missing
    values get their own bucket); categorical features get one bucket per
    value. Buckets come back ordered by absolute mean Shapley value.
    """
    phi = np.asarray(shapley_values, dtype=float)
    if phi.ndim != 2 or phi.shape[1] != len(feature_names):
        raise ExplainError("shapley matrix does not match the feature names")
    categorical = list(categorical) if categorical is not None else [False] * len(feature_names)
    buckets: dict[tuple[str, str], ExplanationBucket] = {}
    for r, row in enumerate(feature_values):
        for j, name in enumerate(feature_names):
            v = row[j]
            key = _value_key(v)
            if categorical[j] or key == "missing":
                label = f"{name} = {key}"
                b = buckets.setdefault((name, label), ExplanationBucket(name, label, value=key))
            else:
                thr = list(thresholds.get(name, ()))
                k = int(np.searchsorted(thr, float(v), side="right"))
                label = interval_label(name, thr, k)
                lower = thr[k - 1] if k > 0 else None
                upper = thr[k] if k < len(thr) else None
                b = buckets.setdefault((name, label), ExplanationBucket(name, label, lower, upper))
            b.samples.append(float(phi[r, j]))
    return sorted(buckets.values(), key=lambda b: (-abs(b.mean), b.label))


def bucket_stats(samples: Sequence[float]) -> dict[str, float]:
    s = np.asarray(samples, dtype=float)
    q1, med, q3 = np.percentile(s, [25, 50, 75])
    iqr = q3 - q1
    inside = s[(s >= q1 - 1.5 * iqr) & (s <= q3 + 1.5 * iqr)]
    return {
        "min": float(s.min()),
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
        "max": float(s.max()),
        "mean": float(s.mean()),
        "count": int(s.size),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
    }


CSV_COLUMNS = ["bucket", "min", "q1", "median", "q3", "max", "mean", "count"]


def export_boxplot(buckets: Sequence[ExplanationBucket], top_k: int = 10, title: str = "") -> tuple[bytes, str]:
    """CSV of order statistics plus a static SVG with ``top_k`` horizontal boxes."""
    if top_k < 1:
        raise ExplainError("top_k must be >= 1")
    shown = [b for b in buckets if b.samples][:top_k]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    stats = [bucket_stats(b.samples) for b in shown]
    for b, s in zip(shown, stats):
        w.writerow([b.label, *(repr(s[c]) if c != "count" else s[c] for c in CSV_COLUMNS[1:])])
    return buf.getvalue().encode("utf-8"), _svg(shown, stats, title)


def _svg(buckets, stats, title: str) -> str:
    row_h, label_w, plot_w, pad = 26, 320, 420, 20
    height = pad * 3 + row_h * len(buckets)
    width = label_w + plot_w + 2 * pad
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{pad}" y="{pad}" font-family="sans-serif" font-size="13">{escape(title)}</text>')
    if buckets:
        lo = min(min(s["min"] for s in stats), 0.0)
        hi = max(max(s["max"] for s in stats), 0.0)
        span = (hi - lo) or 1.0
        x0 = label_w + pad

        def sx(v: float) -> float:
            return round(x0 + (v - lo) / span * plot_w, 2)

        top = pad * 2
        parts.append(
            f'<line x1="{sx(0.0)}" y1="{top - 6}" x2="{sx(0.0)}" y2="{top + row_h * len(buckets)}" '
            'stroke="#999" stroke-dasharray="3,3"/>'
        )
        for k, (b, s) in enumerate(zip(buckets, stats)):
            y = top + k * row_h
            mid = y + row_h / 2
            parts.append(
                f'<text x="{label_w + pad - 6}" y="{mid + 4}" text-anchor="end" font-family="sans-serif" '
                f'font-size="11">{escape(b.label)}</text>'
            )
            parts.append(
                f'<line x1="{sx(s["whisker_low"])}" y1="{mid}" x2="{sx(s["whisker_high"])}" y2="{mid}" stroke="black"/>'
            )
            parts.append(
                f'<rect x="{sx(s["q1"])}" y="{y + 5}" width="{round(sx(s["q3"]) - sx(s["q1"]), 2)}" '
                f'height="{row_h - 10}" fill="#9ecae1" stroke="black"/>'
            )
            parts.append(
                f'<line x1="{sx(s["median"])}" y1="{y + 5}" x2="{sx(s["median"])}" y2="{y + row_h - 5}" stroke="black" stroke-width="2"/>'
            )
            for v in b.samples:
                if v < s["whisker_low"] or v > s["whisker_high"]:
                    parts.append(f'<circle cx="{sx(v)}" cy="{mid}" r="2" fill="none" stroke="black"/>')
        parts.append(
            f'<text x="{x0}" y="{height - 6}" font-family="sans-serif" font-size="10">{escape(_fmt(lo))}</text>'
        )
        parts.append(
            f'<text x="{x0 + plot_w}" y="{height - 6}" text-anchor="end" font-family="sans-serif" '
            f'font-size="10">{escape(_fmt(hi))}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
