"""End-to-end runs: ingest, preprocess, unfold, encode, label, train, evaluate, explain."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import os
import platform
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import __version__
from .encode import (
    FeatureSchema,
    build_dataset,
    build_schema,
    category_vocab,
    to_matrix,
    write_dataset_csv,
)
from .explain import aggregate_explanations, discretize_feature, export_boxplot, sample_background, shapley
from .ingest import (
    FlatCsvSchema,
    drop_attributes,
    drop_constant_attributes,
    drop_sparse_attributes,
    load_log,
    pareto_reduce,
    write_single_id_csv,
)
from .kpi import KpiSpec, label_dataset
from .learn import GbdtConfig, expand_grid, default_grid, fit_gbdt, grid_search, mae, f1, split_cases
from .model import CATEGORICAL, ObjectCentricLog, SingleIdLog, validate_log
from .unfold import UnfoldMode, unfold_log

OUTPUT_ENV = "OCPREDICT_OUTPUT_DIR"
STAGES = ("validate", "unfold", "encode", "label", "train", "evaluate", "explain")


class ConfigError(ValueError):
    """Invalid configuration or a config that does not fit the log."""


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ExplainSettings:
    enabled: bool = False
    max_prefixes: int = 200
    n_permutations: int = 1000
    background: int = 500
    max_exact: int = 12
    max_buckets: int = 5
    top_k: int = 10


@dataclass
class PipelineConfig:
    viewpoint: str
    kpi: dict
    input: str | None = None
    input_format: str | None = None
    schema: str | None = None
    mode: str = "object-aggr"
    max_hops: int | None = None
    aggregator: str = "mean"
    object_value: str = "latest"
    label_reference: bool = True
    drop: list[str] = field(default_factory=list)
    sparse_threshold: float | None = 0.8
    drop_constant: bool = True
    pareto_coverage: float | None = None
    pareto_attributes: list[str] | None = None
    model: dict = field(default_factory=dict)
    grid: dict | None = None
    seed: int = 0
    workers: int = 1
    explain: ExplainSettings = field(default_factory=ExplainSettings)
    output_dir: str | None = None

    def __post_init__(self):
        if isinstance(self.explain, dict):
            self.explain = ExplainSettings(**self.explain)
        try:
            self.mode = UnfoldMode.parse(self.mode).value
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not isinstance(self.kpi, dict) or "kind" not in self.kpi:
            raise ConfigError("kpi must be a mapping with a 'kind' key")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        missing = [k for k in ("viewpoint", "kpi") if k not in d]
        if missing:
            raise ConfigError(f"missing config keys: {', '.join(missing)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path: str | Path, overrides: dict | None = None) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            d = yaml.safe_load(fh) or {}
        if not isinstance(d, dict):
            raise ConfigError("config file must hold a mapping")
        d.update(overrides or {})
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("output_dir", None)
        d.pop("workers", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()

    def kpi_spec(self) -> KpiSpec:
        try:
            return KpiSpec.from_dict(self.kpi)
        except TypeError as exc:
            raise ConfigError(f"bad kpi block: {exc}") from exc

    def gbdt(self) -> GbdtConfig:
        cfg = dict(self.model)
        cfg.setdefault("seed", self.seed)
        if self.kpi_spec().classification:
            cfg.setdefault("loss", "logistic")
        try:
            return GbdtConfig(**cfg)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad model block: {exc}") from exc

    def configs(self) -> list[GbdtConfig]:
        base = self.gbdt()
        if self.grid is None:
            return default_grid(base)
        if not self.grid:
            return [base]
        return expand_grid(base, **{k: list(v) for k, v in self.grid.items()})

    def out(self) -> Path:
        return Path(self.output_dir or os.environ.get(OUTPUT_ENV) or "ocpredict-out")


# -- run ---------------------------------------------------------------------------------


@dataclass
class RunReport:
    metrics: dict[str, Any] = field(default_factory=dict)
    paths: dict[str, str] = field(default_factory=dict)
    manifest: dict[str, Any] = field(default_factory=dict)
    artifacts: dict[str, Any] = field(default_factory=dict)


class _Writer:
    """Tracks files written during a run so a failed run can remove them."""

    def __init__(self, root: Path, report: RunReport, write: bool):
        self.root = root
        self.report = report
        self.write = write
        self.created: list[Path] = []
        self.made_root = False

    def put(self, key: str, name: str, data: bytes | str) -> None:
        if not self.write:
            return
        if not self.root.exists():
            self.root.mkdir(parents=True)
            self.made_root = True
        path = self.root / name
        if isinstance(data, str):
            data = data.encode("utf-8")
        path.write_bytes(data)
        self.created.append(path)
        self.report.paths[key] = str(path)

    def rollback(self) -> None:
        for p in self.created:
            p.unlink(missing_ok=True)
        if self.made_root:
            shutil.rmtree(self.root, ignore_errors=True)


def _json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def preprocess(log: ObjectCentricLog, cfg: PipelineConfig) -> tuple[ObjectCentricLog, dict]:
    notes: dict[str, Any] = {}
    if cfg.drop:
        log = drop_attributes(log, cfg.drop)
        notes["dropped_by_name"] = sorted(cfg.drop)
    if cfg.sparse_threshold is not None:
        log, notes["dropped_sparse"] = drop_sparse_attributes(log, cfg.sparse_threshold)
    if cfg.drop_constant:
        log, notes["dropped_constant"] = drop_constant_attributes(log)
    if cfg.pareto_coverage is not None:
        names = cfg.pareto_attributes
        if names is None:
            names = [a for a in log.attribute_names if log.kind_of(a) == CATEGORICAL]
        for a in names:
            log = pareto_reduce(log, a, cfg.pareto_coverage)
        notes["pareto"] = sorted(names)
    return log, notes


def _load(cfg: PipelineConfig) -> ObjectCentricLog:
    if cfg.input is None:
        raise ConfigError("no input log given")
    schema = FlatCsvSchema.load(cfg.schema) if cfg.schema else None
    return load_log(cfg.input, schema, cfg.input_format)


def _validate(cfg: PipelineConfig, log: ObjectCentricLog) -> None:
    problems = [str(v) for v in validate_log(log)]
    if cfg.viewpoint not in log.object_types:
        problems.append(f"viewpoint type {cfg.viewpoint!r} not in log (types: {', '.join(log.object_types)})")
    problems += [f"kpi: {p}" for p in cfg.kpi_spec().validate(SingleIdLog((), log, cfg.mode, cfg.viewpoint))]
    if problems:
        raise ConfigError("; ".join(problems))
    cfg.gbdt()


def run_pipeline(
    cfg: PipelineConfig,
    log: ObjectCentricLog | None = None,
    until: str = "explain",
    write: bool = True,
) -> RunReport:
    """Run stages up to ``until``; outputs land in ``cfg.out()``.

    A failing stage raises :class:`PipelineError` naming the stage, after the
    files written by this run have been removed.
    """
    if until not in STAGES:
        raise ConfigError(f"unknown stage {until!r}")
    report = RunReport()
    w = _Writer(cfg.out(), report, write)
    stage = "validate"
    try:
        if log is None:
            stage = "ingest"
            log = _load(cfg)
        stage = "validate"
        _validate(cfg, log)
        source = hashlib.sha256(_content_bytes(log)).hexdigest()
        report.manifest = {
            "config_sha256": cfg.digest(),
            "input_sha256": source,
            "seed": cfg.seed,
            "stage": until,
            "versions": {
                "ocpredict": __version__,
                "numpy": np.__version__,
                "python": platform.python_version(),
            },
        }
        if until == "validate":
            return _finish(report, w)

        stage = "preprocess"
        log, notes = preprocess(log, cfg)
        report.metrics["preprocessing"] = notes

        stage = "unfold"
        ulog = unfold_log(log, cfg.viewpoint, cfg.mode, cfg.max_hops, cfg.workers)
        w.put("unfolded", "unfolded.csv", write_single_id_csv(ulog))
        report.metrics["traces"] = len(ulog.traces)
        report.artifacts["unfolded"] = ulog
        if until == "unfold":
            return _finish(report, w)

        stage = "encode"
        schema = build_schema(ulog, cfg.mode, cfg.aggregator, cfg.object_value)
        instances = build_dataset(ulog, schema)
        w.put("schema", "schema.json", schema.to_json())
        report.artifacts["schema"] = schema
        if until == "encode":
            w.put("dataset", "dataset.csv", write_dataset_csv(instances, schema))
            report.metrics["instances"] = len(instances)
            report.artifacts["dataset"] = instances
            return _finish(report, w)

        stage = "label"
        spec = cfg.kpi_spec()
        reference = None
        if cfg.label_reference and cfg.mode == UnfoldMode.NAIVE.value:
            reference = unfold_log(log, cfg.viewpoint, UnfoldMode.OBJECT, cfg.max_hops, cfg.workers)
        labeled = label_dataset(instances, ulog, spec, reference)
        if not labeled:
            raise ValueError("no prefix received a defined KPI label")
        w.put("dataset", "dataset.csv", write_dataset_csv(labeled, schema))
        report.metrics["instances"] = len(labeled)
        report.artifacts["dataset"] = labeled
        if until == "label":
            return _finish(report, w)

        stage = "train"
        train, valid, test, degenerate = _split(labeled, cfg.seed)
        vocab = category_vocab(train + valid, schema)
        X = {k: to_matrix(v, schema, vocab) for k, v in (("train", train), ("valid", valid), ("test", test))}
        y = {k: np.array([float(i.y) for i in v]) for k, v in (("train", train), ("valid", valid), ("test", test))}
        fit_kw = dict(
            categorical=schema.categorical,
            feature_names=schema.names,
            categories=vocab,
            fingerprint=schema.fingerprint,
        )
        if valid:
            result = grid_search((X["train"], y["train"]), (X["valid"], y["valid"]), cfg.configs(), workers=cfg.workers, **fit_kw)
            model, chosen, scores = result.model, result.config, result.scores
        else:
            chosen = cfg.gbdt()
            model = fit_gbdt(X["train"], y["train"], chosen, workers=cfg.workers, **fit_kw)
            scores = []
        w.put("model", "model.json", model.to_json())
        report.artifacts.update(model=model, split=(train, valid, test), matrices=X, targets=y, vocab=vocab)
        report.metrics.update(
            split={"train": len(train), "valid": len(valid), "test": len(test), "degenerate": degenerate},
            chosen=dataclasses.asdict(chosen),
            grid_scores=scores,
            n_trees=len(model.trees),
        )
        if until == "train":
            return _finish(report, w)

        stage = "evaluate"
        pred = model.predict(X["test"], schema.fingerprint)
        if spec.classification:
            report.metrics["f1"] = f1(pred >= 0.5, y["test"] >= 0.5)
        else:
            report.metrics["mae"] = mae(pred, y["test"])
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["case_id", "prefix_len", "label", "prediction"])
        for inst, p in zip(test, pred):
            wr.writerow([inst.case_id, inst.prefix_len, repr(float(inst.y)), repr(float(p))])
        w.put("predictions", "predictions.csv", buf.getvalue())
        w.put("metrics", "metrics.json", _json(report.metrics))
        if until == "evaluate" or not cfg.explain.enabled:
            return _finish(report, w)

        stage = "explain"
        buckets = explain_run(cfg, schema, model, train, test, X["train"], y["train"], X["test"])
        report.artifacts["buckets"] = buckets
        table, svg = export_boxplot(buckets, cfg.explain.top_k, title=f"{spec.kind} / {cfg.mode}")
        w.put("explanations", "explanations.csv", table)
        w.put("boxplot", "explanations.svg", svg)
        w.put(
            "buckets",
            "buckets.json",
            _json([{"feature": b.feature, "label": b.label, "samples": b.samples} for b in buckets]),
        )
        report.metrics["top_buckets"] = [b.label for b in buckets[: cfg.explain.top_k]]
        return _finish(report, w)
    except Exception as exc:
        w.rollback()
        report.paths.clear()
        raise PipelineError(stage, exc) from exc


def _content_bytes(log: ObjectCentricLog) -> bytes:
    """Stable byte rendering of a log's content, used for the input hash."""
    rows = [
        [e.id, e.activity, e.timestamp.isoformat(), sorted(e.omap), sorted((k, str(v)) for k, v in e.vmap.items())]
        for e in sorted(log.events, key=lambda e: e.id)
    ]
    return json.dumps(rows).encode("utf-8")


def _finish(report: RunReport, w: _Writer) -> RunReport:
    w.put("manifest", "manifest.json", _json(report.manifest))
    return report


def _split(instances, seed: int):
    cases = {i.case_id for i in instances}
    if len(cases) < 3:
        # too few cases for disjoint parts; train and test on everything
        return list(instances), [], list(instances), True
    train_c, valid_c, test_c = split_cases(cases, seed)
    part = {c: 0 for c in train_c} | {c: 1 for c in valid_c} | {c: 2 for c in test_c}
    out: tuple[list, list, list] = ([], [], [])
    for i in instances:
        out[part[i.case_id]].append(i)
    return out[0], out[1], out[2], False


def explain_run(cfg: PipelineConfig, schema: FeatureSchema, model, train, test, X_train, y_train, X_test):
    s = cfg.explain
    rng = np.random.default_rng(cfg.seed)
    rows = np.arange(len(test))
    if len(rows) > s.max_prefixes:
        rows = np.sort(rng.choice(len(rows), s.max_prefixes, replace=False))
    background = sample_background(X_train, s.background, cfg.seed)

    def one(k: int):
        r = int(rows[k])
        return shapley(model, X_test[r], background, s.max_exact, s.n_permutations, cfg.seed + k).values

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            phi = list(pool.map(one, range(len(rows))))
    else:
        phi = [one(k) for k in range(len(rows))]
    thresholds = {}
    for j, f in enumerate(schema.features):
        if not schema.categorical[j]:
            thresholds[f.name] = discretize_feature(X_train[:, j], y_train, s.max_buckets)
    values = [test[int(r)].x for r in rows]
    return aggregate_explanations(np.array(phi).reshape(len(rows), len(schema)), values, schema.names, thresholds, schema.categorical)
