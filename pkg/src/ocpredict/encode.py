"""Prefix encoding: activity counts, last-event tuple and aggregation features."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .ingest import format_value
from .model import CATEGORICAL, MISSING, NUMERIC, EventRecord, ObjectCentricLog, SingleIdLog, Trace
from .unfold import UnfoldMode

MISSING_CATEGORY = "⟂missing"

AGGREGATORS = {
    "mean": lambda vs: math.fsum(vs) / len(vs),
    "sum": math.fsum,
    "min": min,
    "max": max,
}

# feature sources
COUNT = "activity-count"
LAST_ACTIVITY = "last-event-activity"
LAST_ATTR = "last-event-attribute"
ELAPSED = "elapsed-time"
EPOCH = "event-time"
AGG_NUMERIC = "aggregate-numeric"
AGG_RATIO = "aggregate-categorical-ratio"
OBJ_COUNT = "object-count"
COVERAGE = "activity-coverage"

AGGREGATE_SOURCES = frozenset({AGG_NUMERIC, AGG_RATIO, OBJ_COUNT, COVERAGE})


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str
    source: str
    activity: str | None = None
    attribute: str | None = None
    value: str | None = None
    object_type: str | None = None


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[Feature, ...]
    mode: str = UnfoldMode.OBJECT.value
    aggregator: str = "mean"
    object_value: str = "latest"

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate feature names: {dup}")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def categorical(self) -> list[bool]:
        return [f.kind == CATEGORICAL for f in self.features]

    def index(self, name: str) -> int:
        return self.names.index(name)

    @property
    def fingerprint(self) -> str:
        blob = json.dumps([[f.name, f.kind] for f in self.features]).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_json(self) -> str:
        return json.dumps(
            {
                "mode": self.mode,
                "aggregator": self.aggregator,
                "object_value": self.object_value,
                "fingerprint": self.fingerprint,
                "features": [{k: v for k, v in asdict(f).items() if v is not None} for f in self.features],
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "FeatureSchema":
        doc = json.loads(text)
        return cls(
            tuple(Feature(**f) for f in doc["features"]),
            doc.get("mode", UnfoldMode.OBJECT.value),
            doc.get("aggregator", "mean"),
            doc.get("object_value", "latest"),
        )


@dataclass
class PrefixInstance:
    case_id: str
    prefix_len: int
    x: tuple
    last_event: str = ""
    y: Any = None


# -- per-prefix feature functions (direct scans) ----------------------------------


def event_tuple(log: ObjectCentricLog, event_id: str, attributes: Sequence[str] | None = None) -> tuple:
    """(activity, timestamp, attribute values...) with attributes in name order."""
    e = log.by_id[event_id]
    names = sorted(attributes) if attributes is not None else log.attribute_names
    return (e.activity, e.timestamp, *(e.vmap.get(a, MISSING) for a in names))


def activity_counts(prefix: Sequence[EventRecord], activities: Sequence[str]) -> list[int]:
    counts = dict.fromkeys(activities, 0)
    for e in prefix:
        counts[e.activity] += 1
    return [counts[a] for a in activities]


def _object_values(log, prefix, attribute, owner_type, policy="latest"):
    values: dict[str, Any] = {}
    for e in prefix:
        if attribute not in e.vmap:
            continue
        for o in e.omap:
            if log.objects[o] == owner_type and (policy == "latest" or o not in values):
                values[o] = e.vmap[attribute]
    return values


def aggregate_numeric(
    log: ObjectCentricLog,
    prefix: Sequence[EventRecord],
    attribute: str,
    owner_type: str,
    aggregator: str = "mean",
    object_value: str = "latest",
):
    values = _object_values(log, prefix, attribute, owner_type, object_value)
    if not values:
        return MISSING
    return float(AGGREGATORS[aggregator](list(values.values())))


def aggregate_categorical_ratio(
    log: ObjectCentricLog,
    prefix: Sequence[EventRecord],
    attribute: str,
    value: str,
    owner_type: str,
    object_value: str = "latest",
) -> float:
    values = _object_values(log, prefix, attribute, owner_type, object_value)
    if not values:
        return 0.0
    return sum(v == value for v in values.values()) / len(values)


def count_objects_by_type(log: ObjectCentricLog, prefix: Sequence[EventRecord], object_type: str) -> int:
    return len({o for e in prefix for o in e.omap if log.objects[o] == object_type})


def activity_coverage_ratio(
    log: ObjectCentricLog, prefix: Sequence[EventRecord], object_type: str, activity: str
) -> float:
    objs = {o for e in prefix for o in e.omap if log.objects[o] == object_type}
    if not objs:
        return 0.0
    done = {o for e in prefix if e.activity == activity for o in e.omap if o in objs}
    return len(done) / len(objs)


# -- schema ----------------------------------------------------------------------------


def build_schema(
    ulog: SingleIdLog,
    mode: "UnfoldMode | str | None" = None,
    aggregator: str = "mean",
    object_value: str = "latest",
) -> FeatureSchema:
    """Feature layout for an unfolded log; order is fixed by sorted names per family."""
    mode = UnfoldMode.parse(mode or ulog.mode)
    if aggregator not in AGGREGATORS:
        raise SchemaError(f"unknown aggregator {aggregator!r}")
    if object_value not in ("latest", "first"):
        raise SchemaError(f"unknown object value policy {object_value!r}")
    store = ulog.store
    feats: list[Feature] = [Feature(f"count[{a}]", NUMERIC, COUNT, activity=a) for a in ulog.activities]
    feats.append(Feature("last.activity", CATEGORICAL, LAST_ACTIVITY))
    feats.append(Feature("elapsed_time", NUMERIC, ELAPSED))
    feats.append(Feature("timestamp", NUMERIC, EPOCH))
    feats += [Feature(f"last.{a}", store.kind_of(a), LAST_ATTR, attribute=a) for a in ulog.attribute_names]

    if mode is UnfoldMode.OBJECT_AGGR:
        events = [store.by_id[e] for e in sorted(ulog.event_ids)]
        types_seen = sorted({store.objects[o] for e in events for o in e.omap})
        feats += [Feature(f"#{t}", NUMERIC, OBJ_COUNT, object_type=t) for t in types_seen]
        for a in ulog.attribute_names:
            owner = store.owner_of(a)
            if owner is None:
                continue
            if store.kind_of(a) == NUMERIC:
                feats.append(Feature(f"{aggregator}({a})", NUMERIC, AGG_NUMERIC, attribute=a, object_type=owner))
            else:
                values = sorted({e.vmap[a] for e in events if a in e.vmap})
                feats += [
                    Feature(f"%{a}={v}", NUMERIC, AGG_RATIO, attribute=a, value=v, object_type=owner)
                    for v in values
                ]
        pairs = sorted({(store.objects[o], e.activity) for e in events for o in e.omap})
        feats += [Feature(f"({t}, %{a})", NUMERIC, COVERAGE, activity=a, object_type=t) for t, a in pairs]
    return FeatureSchema(tuple(feats), mode.value, aggregator, object_value)


# -- incremental encoder -----------------------------------------------------------


class _PrefixState:
    """Running summaries of a growing prefix, enough to emit every feature."""

    def __init__(self, store: ObjectCentricLog, schema: FeatureSchema):
        self.store = store
        self.schema = schema
        self.aggr = schema.mode == UnfoldMode.OBJECT_AGGR.value
        self.activities = {f.activity for f in schema.features if f.source == COUNT}
        self.counts: dict[str, int] = {}
        self.start: int | None = None
        self.last: EventRecord | None = None
        self.seen: dict[str, set[str]] = {}
        self.done: dict[str, set[str]] = {}
        self.owned = {
            f.attribute: f.object_type for f in schema.features if f.source in (AGG_NUMERIC, AGG_RATIO)
        }
        self.obj_values: dict[str, dict[str, Any]] = {a: {} for a in self.owned}

    def push(self, e: EventRecord) -> None:
        if e.activity not in self.activities:
            raise SchemaError(f"activity {e.activity!r} of event {e.id} is not in the feature schema")
        self.counts[e.activity] = self.counts.get(e.activity, 0) + 1
        if self.start is None:
            self.start = e.epoch
        self.last = e
        if not self.aggr:
            return
        objects = self.store.objects
        for o in e.omap:
            self.seen.setdefault(objects[o], set()).add(o)
            self.done.setdefault(o, set()).add(e.activity)
        latest = self.schema.object_value == "latest"
        for a, owner in self.owned.items():
            if a in e.vmap:
                vals = self.obj_values[a]
                for o in e.omap:
                    if objects[o] == owner and (latest or o not in vals):
                        vals[o] = e.vmap[a]

    def vector(self) -> tuple:
        e = self.last
        agg = AGGREGATORS[self.schema.aggregator]
        out = []
        for f in self.schema.features:
            src = f.source
            if src == COUNT:
                out.append(float(self.counts.get(f.activity, 0)))
            elif src == LAST_ACTIVITY:
                out.append(e.activity)
            elif src == ELAPSED:
                out.append(float(e.epoch - self.start))
            elif src == EPOCH:
                out.append(float(e.epoch))
            elif src == LAST_ATTR:
                out.append(e.vmap.get(f.attribute, MISSING))
            elif src == OBJ_COUNT:
                out.append(float(len(self.seen.get(f.object_type, ()))))
            elif src == AGG_NUMERIC:
                vals = self.obj_values[f.attribute]
                out.append(float(agg(list(vals.values()))) if vals else MISSING)
            elif src == AGG_RATIO:
                vals = self.obj_values[f.attribute]
                out.append(sum(v == f.value for v in vals.values()) / len(vals) if vals else 0.0)
            elif src == COVERAGE:
                objs = self.seen.get(f.object_type, ())
                hit = sum(f.activity in self.done[o] for o in objs)
                out.append(hit / len(objs) if objs else 0.0)
            else:
                raise SchemaError(f"unknown feature source {src!r}")
        return tuple(out)


def encode_prefix(store: ObjectCentricLog, prefix: Iterable[str], schema: FeatureSchema) -> tuple:
    state = _PrefixState(store, schema)
    n = 0
    for eid in prefix:
        state.push(store.by_id[eid])
        n += 1
    if n == 0:
        raise ValueError("cannot encode an empty prefix")
    return state.vector()


def encode_trace(store: ObjectCentricLog, trace: Trace, schema: FeatureSchema) -> list[PrefixInstance]:
    state = _PrefixState(store, schema)
    out = []
    for i, eid in enumerate(trace.event_ids, 1):
        state.push(store.by_id[eid])
        out.append(PrefixInstance(trace.case_id, i, state.vector(), eid))
    return out


def build_dataset(ulog: SingleIdLog, schema: FeatureSchema | None = None) -> list[PrefixInstance]:
    """One unlabeled instance per (trace, prefix length), in trace then length order."""
    schema = schema or build_schema(ulog)
    out: list[PrefixInstance] = []
    for t in ulog.traces:
        out.extend(encode_trace(ulog.store, t, schema))
    return out


# -- matrix view and files -------------------------------------------------------------


def category_vocab(instances: Sequence[PrefixInstance], schema: FeatureSchema) -> dict[str, list[str]]:
    vocab = {}
    for j, f in enumerate(schema.features):
        if f.kind == CATEGORICAL:
            vals = {MISSING_CATEGORY if x.x[j] is MISSING else str(x.x[j]) for x in instances}
            vocab[f.name] = sorted(vals)
    return vocab


def to_matrix(
    instances: Sequence[PrefixInstance], schema: FeatureSchema, vocab: dict[str, list[str]]
) -> np.ndarray:
    """Float matrix: NaN for missing numerics, vocabulary codes for categoricals.

    Categories absent from ``vocab`` become NaN and follow the learned
    missing direction at prediction time.
    """
    X = np.full((len(instances), len(schema)), np.nan)
    for j, f in enumerate(schema.features):
        if f.kind == CATEGORICAL:
            codes = {v: float(i) for i, v in enumerate(vocab.get(f.name, []))}
            for i, inst in enumerate(instances):
                v = inst.x[j]
                X[i, j] = codes.get(MISSING_CATEGORY if v is MISSING else str(v), np.nan)
        else:
            for i, inst in enumerate(instances):
                v = inst.x[j]
                if v is not MISSING:
                    X[i, j] = float(v)
    return X


def _cell(v) -> str:
    return "" if v is MISSING or v is None else format_value(v)


def write_dataset_csv(instances: Sequence[PrefixInstance], schema: FeatureSchema) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*schema.names, "case_id", "prefix_len", "label"])
    for inst in instances:
        y = inst.y
        label = "" if y is None else (str(y).lower() if isinstance(y, bool) else format_value(float(y)))
        w.writerow([*(_cell(v) for v in inst.x), inst.case_id, inst.prefix_len, label])
    return buf.getvalue().encode("utf-8")


def read_dataset_csv(data: bytes | str, schema: FeatureSchema) -> list[PrefixInstance]:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][: len(schema)] != schema.names:
        raise SchemaError("dataset header does not match the feature schema")
    out = []
    kinds = [f.kind for f in schema.features]
    for row in rows[1:]:
        x = tuple(
            MISSING if c == "" else (float(c) if k == NUMERIC else c) for c, k in zip(row[: len(schema)], kinds)
        )
        case_id, plen, label = row[len(schema) : len(schema) + 3]
        y: Any = None
        if label in ("true", "false"):
            y = label == "true"
        elif label:
            y = float(label)
        out.append(PrefixInstance(case_id, int(plen), x, y=y))
    return out


def aggregate_feature_indices(schema: FeatureSchema) -> list[int]:
    return [j for j, f in enumerate(schema.features) if f.source in AGGREGATE_SOURCES]


__all__ = [
    "Feature",
    "FeatureSchema",
    "PrefixInstance",
    "build_schema",
    "build_dataset",
    "encode_prefix",
    "encode_trace",
    "event_tuple",
    "activity_counts",
    "aggregate_numeric",
    "aggregate_categorical_ratio",
    "count_objects_by_type",
    "activity_coverage_ratio",
    "to_matrix",
    "category_vocab",
    "write_dataset_csv",
    "read_dataset_csv",
]
