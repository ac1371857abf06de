"""Reading and writing logs, plus attribute preprocessing."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Iterable

from .model import (
    CATEGORICAL,
    NUMERIC,
    EventRecord,
    ObjectCentricLog,
    SingleIdLog,
    to_utc,
)

DEFAULT_TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M"
OUTPUT_TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"
OTHER = "other"


class IngestError(ValueError):
    """Input data that cannot be turned into a valid log."""


class ParseError(IngestError):
    def __init__(self, message: str, offset: int | None = None, row: int | None = None):
        super().__init__(message)
        self.offset = offset
        self.row = row


class ReferentialError(IngestError):
    def __init__(self, message: str, event_id: str):
        super().__init__(message)
        self.event_id = event_id


class KindError(IngestError):
    pass


# -- value normalization -------------------------------------------------------


def _as_number(raw: Any) -> float | None:
    if isinstance(raw, bool):
        return None
    if isinstance(raw, (int, float)):
        return float(raw)
    if isinstance(raw, str):
        try:
            return float(raw.strip())
        except ValueError:
            return None
    return None


def format_value(v: Any) -> str:
    if isinstance(v, float):
        return str(int(v)) if v.is_integer() else repr(v)
    return str(v)


def _normalize_vmaps(
    raw: list[dict[str, Any]], kinds: dict[str, str]
) -> tuple[list[dict[str, Any]], dict[str, str]]:
    """Settle each attribute's kind and coerce values to float or str."""
    names = sorted({k for vm in raw for k in vm})
    resolved: dict[str, str] = {}
    for name in names:
        if name in kinds:
            resolved[name] = kinds[name]
            continue
        values = [vm[name] for vm in raw if name in vm]
        resolved[name] = NUMERIC if all(_as_number(v) is not None for v in values) else CATEGORICAL
    for name, kind in kinds.items():
        resolved.setdefault(name, kind)
    out = []
    for vm in raw:
        norm = {}
        for k, v in vm.items():
            if resolved[k] == NUMERIC:
                num = _as_number(v)
                if num is None:
                    raise KindError(f"attribute {k!r} declared numeric but has value {v!r}")
                norm[k] = num
            else:
                norm[k] = format_value(v) if not isinstance(v, str) else v
        out.append(norm)
    return out, resolved


def parse_timestamp(raw: str, fmt: str | None = None) -> datetime:
    raw = raw.strip()
    if fmt:
        return to_utc(datetime.strptime(raw, fmt))
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    return to_utc(datetime.fromisoformat(raw))


# -- OCEL 1.0 JSON -------------------------------------------------------------


def parse_ocel_json(data: bytes | str, kinds: dict[str, str] | None = None) -> ObjectCentricLog:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ParseError(f"malformed JSON at byte {offset}: {exc.msg}", offset=offset) from exc
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object", offset=0)

    objects: dict[str, str] = {}
    ovmaps: dict[str, dict[str, Any]] = {}
    for oid, obj in (doc.get("ocel:objects") or {}).items():
        objects[str(oid)] = str(obj.get("ocel:type", ""))
        if obj.get("ocel:ovmap"):
            ovmaps[str(oid)] = dict(obj["ocel:ovmap"])

    raw_events = doc.get("ocel:events") or {}
    ids, acts, stamps, omaps, vmaps = [], [], [], [], []
    for eid, ev in raw_events.items():
        eid = str(eid)
        omap = frozenset(str(o) for o in ev.get("ocel:omap", []))
        for o in sorted(omap):
            if o not in objects:
                raise ReferentialError(f"event {eid} references unknown object {o!r}", eid)
        try:
            ts = parse_timestamp(str(ev["ocel:timestamp"]))
        except (KeyError, ValueError) as exc:
            raise ParseError(f"event {eid}: bad or missing timestamp") from exc
        ids.append(eid)
        acts.append(str(ev.get("ocel:activity", "")))
        stamps.append(ts)
        omaps.append(omap)
        vmaps.append({k: v for k, v in (ev.get("ocel:vmap") or {}).items() if v is not None and v != ""})
    vmaps, resolved = _normalize_vmaps(vmaps, dict(kinds or {}))
    events = tuple(
        EventRecord(i, a, t, v, o) for i, a, t, v, o in zip(ids, acts, stamps, vmaps, omaps)
    )
    return ObjectCentricLog(events, objects, resolved, {}, ovmaps)


def write_ocel_json(log: ObjectCentricLog) -> bytes:
    doc = {
        "ocel:global-log": {
            "ocel:attribute-names": list(log.attribute_names),
            "ocel:object-types": list(log.object_types),
        },
        "ocel:events": {
            e.id: {
                "ocel:activity": e.activity,
                "ocel:timestamp": e.timestamp.isoformat(),
                "ocel:omap": sorted(e.omap),
                "ocel:vmap": dict(e.vmap),
            }
            for e in log.events
        },
        "ocel:objects": {
            o: {"ocel:type": t, "ocel:ovmap": dict(log.object_attributes.get(o, {}))}
            for o, t in sorted(log.objects.items())
        },
    }
    return json.dumps(doc, indent=1).encode("utf-8")


# -- flat CSV ------------------------------------------------------------------


@dataclass
class FlatCsvSchema:
    """Column layout of a flat object-centric CSV (one row per event)."""

    object_columns: list[str]
    id_column: str = "id"
    activity_column: str = "activity"
    timestamp_column: str = "timestamp"
    timestamp_format: str = DEFAULT_TIMESTAMP_FORMAT
    kinds: dict[str, str] = field(default_factory=dict)
    owners: dict[str, str | None] = field(default_factory=dict)

    @classmethod
    def parse(cls, text: str) -> "FlatCsvSchema":
        """Read the ``key = value`` sidecar format.

        Recognized keys: ``id``, ``activity``, ``timestamp``,
        ``timestamp_format``, ``objects`` (comma list), ``kind.<attr>`` and
        ``owner.<attr>`` (``none`` marks a log-level attribute).
        """
        kw: dict[str, Any] = {"kinds": {}, "owners": {}, "object_columns": []}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"schema line {lineno}: expected key = value", row=lineno)
            key, value = (s.strip() for s in line.split("=", 1))
            if key == "id":
                kw["id_column"] = value
            elif key == "activity":
                kw["activity_column"] = value
            elif key == "timestamp":
                kw["timestamp_column"] = value
            elif key == "timestamp_format":
                kw["timestamp_format"] = value
            elif key == "objects":
                kw["object_columns"] = [v.strip() for v in value.split(",") if v.strip()]
            elif key.startswith("kind."):
                if value not in (NUMERIC, CATEGORICAL):
                    raise ParseError(f"schema line {lineno}: unknown kind {value!r}", row=lineno)
                kw["kinds"][key[5:]] = value
            elif key.startswith("owner."):
                kw["owners"][key[6:]] = None if value.lower() == "none" else value
            else:
                raise ParseError(f"schema line {lineno}: unknown key {key!r}", row=lineno)
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "FlatCsvSchema":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def dumps(self) -> str:
        lines = [
            f"id = {self.id_column}",
            f"activity = {self.activity_column}",
            f"timestamp = {self.timestamp_column}",
            f"timestamp_format = {self.timestamp_format}",
            f"objects = {', '.join(self.object_columns)}",
        ]
        lines += [f"kind.{k} = {v}" for k, v in sorted(self.kinds.items())]
        lines += [f"owner.{k} = {v or 'none'}" for k, v in sorted(self.owners.items())]
        return "\n".join(lines) + "\n"


def parse_flat_csv(data: bytes | str, schema: FlatCsvSchema) -> ObjectCentricLog:
    text = data.decode("utf-8-sig") if isinstance(data, bytes) else data
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty CSV, no header row", row=1) from None
    header = [h.strip() for h in header]
    required = [schema.id_column, schema.activity_column, schema.timestamp_column]
    for col in required + schema.object_columns:
        if col not in header:
            raise ParseError(f"header lacks column {col!r}", row=1)
    special = set(required) | set(schema.object_columns)
    attr_cols = [h for h in header if h not in special]
    col = {h: i for i, h in enumerate(header)}

    objects: dict[str, str] = {}
    seen: set[str] = set()
    ids, acts, stamps, omaps, vmaps = [], [], [], [], []
    for rowno, row in enumerate(reader, start=2):
        if not any(cell.strip() for cell in row):
            continue
        row = row + [""] * (len(header) - len(row))
        eid = row[col[schema.id_column]].strip()
        if eid in seen:
            raise ParseError(f"row {rowno}: duplicate event id {eid!r}", row=rowno)
        seen.add(eid)
        try:
            ts = parse_timestamp(row[col[schema.timestamp_column]], schema.timestamp_format)
        except ValueError as exc:
            raise ParseError(f"row {rowno}: unparseable timestamp ({exc})", row=rowno) from exc
        omap = set()
        for otype in schema.object_columns:
            for oid in row[col[otype]].split(","):
                oid = oid.strip()
                if not oid:
                    continue
                if objects.setdefault(oid, otype) != otype:
                    raise ParseError(
                        f"row {rowno}: object {oid!r} appears under types "
                        f"{objects[oid]!r} and {otype!r}",
                        row=rowno,
                    )
                omap.add(oid)
        ids.append(eid)
        acts.append(row[col[schema.activity_column]].strip())
        stamps.append(ts)
        omaps.append(frozenset(omap))
        vmaps.append({a: row[col[a]].strip() for a in attr_cols if row[col[a]].strip() != ""})
    vmaps, resolved = _normalize_vmaps(vmaps, dict(schema.kinds))
    for a in attr_cols:
        resolved.setdefault(a, schema.kinds.get(a, CATEGORICAL))
    events = tuple(EventRecord(i, a, t, v, o) for i, a, t, v, o in zip(ids, acts, stamps, vmaps, omaps))
    return ObjectCentricLog(events, objects, resolved, dict(schema.owners))


def write_flat_csv(log: ObjectCentricLog, schema: FlatCsvSchema) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    attrs = list(log.attribute_names)
    w.writerow([schema.id_column, schema.activity_column, schema.timestamp_column, *schema.object_columns, *attrs])
    for eid in log.ordered_ids:
        e = log.by_id[eid]
        objs = [",".join(sorted(o for o in e.omap if log.objects[o] == t)) for t in schema.object_columns]
        vals = [format_value(e.vmap[a]) if a in e.vmap else "" for a in attrs]
        w.writerow([e.id, e.activity, e.timestamp.strftime(schema.timestamp_format), *objs, *vals])
    return buf.getvalue().encode("utf-8")


def write_single_id_csv(log: SingleIdLog) -> bytes:
    """One row per (trace, event) occurrence, case id first."""
    store = log.store
    types = list(store.object_types)
    attrs = list(log.attribute_names) if log.traces else list(store.attribute_names)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case_id", "event_id", "activity", "timestamp", *types, *attrs])
    for t in log.traces:
        for eid in t.event_ids:
            e = store.by_id[eid]
            objs = [",".join(sorted(o for o in e.omap if store.objects[o] == ot)) for ot in types]
            vals = [format_value(e.vmap[a]) if a in e.vmap else "" for a in attrs]
            w.writerow([t.case_id, e.id, e.activity, e.timestamp.strftime(OUTPUT_TIMESTAMP_FORMAT), *objs, *vals])
    return buf.getvalue().encode("utf-8")


def load_log(path: str | Path, schema: FlatCsvSchema | None = None, fmt: str | None = None) -> ObjectCentricLog:
    """Load an OCEL JSON or flat CSV file, picking the parser by extension."""
    path = Path(path)
    fmt = fmt or ("ocel" if path.suffix.lower() in (".json", ".jsonocel") else "csv")
    if fmt == "ocel":
        return parse_ocel_json(path.read_bytes(), kinds=schema.kinds if schema else None)
    if schema is None:
        sidecar = path.with_suffix(".schema")
        if not sidecar.exists():
            raise IngestError(f"flat CSV {path} needs a schema sidecar ({sidecar.name})")
        schema = FlatCsvSchema.load(sidecar)
    return parse_flat_csv(path.read_bytes(), schema)


# -- preprocessing ---------------------------------------------------------------


def _without(log: ObjectCentricLog, names: Iterable[str]) -> ObjectCentricLog:
    drop = set(names)
    if not drop:
        return log
    events = [
        EventRecord(e.id, e.activity, e.timestamp, {k: v for k, v in e.vmap.items() if k not in drop}, e.omap)
        for e in log.events
    ]
    return log.replace_events(
        events,
        attribute_kinds={k: v for k, v in log.attribute_kinds.items() if k not in drop},
        attribute_owners={k: v for k, v in log.attribute_owners.items() if k not in drop},
    )


def drop_attributes(log: ObjectCentricLog, names: Iterable[str]) -> ObjectCentricLog:
    """Remove attributes by name (the user-supplied duplicate list)."""
    return _without(log, names)


def missing_fraction(log: ObjectCentricLog, name: str) -> float:
    """Share of in-scope events lacking the attribute.

    Scope is the events carrying an object of the attribute's owner type, or
    every event for log-level attributes.
    """
    owner = log.owner_of(name)
    scope = present = 0
    for e in log.events:
        if owner is not None and not any(log.objects.get(o) == owner for o in e.omap):
            continue
        scope += 1
        present += name in e.vmap
    return 1.0 if scope == 0 else 1.0 - present / scope


def drop_sparse_attributes(log: ObjectCentricLog, threshold: float = 0.8) -> tuple[ObjectCentricLog, list[str]]:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    dropped = [n for n in log.attribute_names if missing_fraction(log, n) > threshold]
    return _without(log, dropped), dropped


def drop_constant_attributes(log: ObjectCentricLog) -> tuple[ObjectCentricLog, list[str]]:
    values: dict[str, set] = {}
    for e in log.events:
        for k, v in e.vmap.items():
            values.setdefault(k, set()).add(v)
    dropped = sorted(n for n, vs in values.items() if len(vs) == 1)
    return _without(log, dropped), dropped


def pareto_reduce(log: ObjectCentricLog, attribute: str, coverage: float = 0.8) -> ObjectCentricLog:
    """Keep the most frequent values covering ``coverage`` of events; relabel the rest.

    Values are ranked by frequency desc, then value asc; the smallest ranked
    prefix whose cumulative share reaches ``coverage`` is kept. The literal
    ``"other"`` is never ranked, which keeps the operation idempotent.
    """
    if not 0.0 < coverage <= 1.0:
        raise ValueError("coverage must lie in (0, 1]")
    if log.kind_of(attribute) != CATEGORICAL:
        raise KindError(f"pareto_reduce needs a categorical attribute, {attribute!r} is numeric")
    freq = Counter(e.vmap[attribute] for e in log.events if attribute in e.vmap)
    total = sum(freq.values())
    ranked = sorted((v for v in freq if v != OTHER), key=lambda v: (-freq[v], v))
    keep: set = set()
    acc = 0
    for v in ranked:
        keep.add(v)
        acc += freq[v]
        if acc >= coverage * total - 1e-9 * total:
            break
    if len(keep) == len(ranked):
        return log
    events = []
    for e in log.events:
        v = e.vmap.get(attribute)
        if v is None or v in keep or v == OTHER:
            events.append(e)
        else:
            events.append(EventRecord(e.id, e.activity, e.timestamp, {**e.vmap, attribute: OTHER}, e.omap))
    return log.replace_events(events)
