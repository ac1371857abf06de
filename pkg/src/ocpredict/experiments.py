"""Three-technique comparison (naive, object, object-aggr) on synthetic logs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pipeline import PipelineConfig, RunReport, run_pipeline
from .synthetic import CLEARED, CREATED, SyntheticSpec, generate_synthetic

MODES = ("naive", "object", "object-aggr")
SMALL_GRID = {"max_depth": [3], "min_samples_leaf": [5, 20]}


@dataclass
class Comparison:
    mae: dict[str, float]
    ci: dict[str, tuple[float, float]]
    top_buckets: list[str] = field(default_factory=list)
    reports: dict[str, RunReport] = field(default_factory=dict)

    def relative_spread(self) -> float:
        v = list(self.mae.values())
        return (max(v) - min(v)) / min(v)


def path_time_kpi() -> dict:
    return {"kind": "path-time", "source": CREATED, "target": CLEARED}


def _case_errors(report: RunReport) -> dict[str, list[float]]:
    model = report.artifacts["model"]
    _, _, test = report.artifacts["split"]
    pred = model.predict(report.artifacts["matrices"]["test"])
    out: dict[str, list[float]] = {}
    for inst, p in zip(test, pred):
        out.setdefault(inst.case_id, []).append(abs(float(p) - float(inst.y)))
    return out


def bootstrap_mae(errors: dict[str, list[float]], cases: list[str], n: int = 1000, seed: int = 0) -> tuple[float, float]:
    """95% percentile interval of prefix-level MAE, resampling whole test cases."""
    rng = np.random.default_rng(seed)
    sums = np.array([sum(errors.get(c, ())) for c in cases])
    counts = np.array([len(errors.get(c, ())) for c in cases])
    idx = rng.integers(0, len(cases), size=(n, len(cases)))
    stats = sums[idx].sum(axis=1) / np.maximum(counts[idx].sum(axis=1), 1)
    lo, hi = np.percentile(stats, [2.5, 97.5])
    return float(lo), float(hi)


def compare_modes(
    spec: SyntheticSpec = SyntheticSpec(n_requisitions=500),
    seed: int = 7,
    grid: dict | None = None,
    explain: dict | None = None,
    workers: int = 1,
) -> Comparison:
    """Generate one log and run the pipeline once per unfolding mode.

    All modes share the case-level split (same seed, same requisition ids),
    and naive prefixes are labeled on the object-centric trace of their case.
    """
    log = generate_synthetic(spec, seed)
    grid = SMALL_GRID if grid is None else grid
    maes, cis, reports = {}, {}, {}
    top: list[str] = []
    for mode in MODES:
        cfg = PipelineConfig(
            viewpoint="Requisition",
            mode=mode,
            kpi=path_time_kpi(),
            grid=grid,
            seed=seed,
            workers=workers,
            explain=dict(explain or {}, enabled=bool(explain) and mode == "object-aggr"),
        )
        r = run_pipeline(cfg, log, write=False)
        reports[mode] = r
        maes[mode] = r.metrics["mae"]
        errors = _case_errors(r)
        cis[mode] = bootstrap_mae(errors, sorted(errors), seed=seed)
        if mode == "object-aggr":
            top = r.metrics.get("top_buckets", [])
    return Comparison(maes, cis, top, reports)
