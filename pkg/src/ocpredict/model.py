"""Object-centric and single-id log data model."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import cached_property
from typing import Iterable, Mapping, Union

NUMERIC = "numeric"
CATEGORICAL = "categorical"


class _Missing:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "MISSING"

    def __bool__(self) -> bool:
        return False

    def __reduce__(self):
        return (_Missing, ())


MISSING = _Missing()

Value = Union[float, str]


def to_utc(ts: datetime) -> datetime:
    """Normalize to an aware UTC datetime truncated to whole seconds."""
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    else:
        ts = ts.astimezone(timezone.utc)
    return ts.replace(microsecond=0)


@dataclass(frozen=True)
class EventRecord:
    id: str
    activity: str
    timestamp: datetime
    vmap: Mapping[str, Value] = field(default_factory=dict)
    omap: frozenset[str] = frozenset()

    @cached_property
    def epoch(self) -> int:
        return int(self.timestamp.timestamp())

    def get(self, name: str):
        return self.vmap.get(name, MISSING)


@dataclass(frozen=True)
class Violation:
    rule: str
    subject: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.rule}: {self.subject} {self.detail}".rstrip()


@dataclass(frozen=True)
class ObjectCentricLog:
    """Events, the object registry and the attribute schema.

    ``attribute_owners`` holds explicit owner-type declarations; attributes not
    listed get an owner inferred from the events carrying them (see
    :meth:`owner_of`). ``object_attributes`` stores per-object attribute maps as
    read from the input; nothing downstream uses them.
    """

    events: tuple[EventRecord, ...]
    objects: Mapping[str, str]
    attribute_kinds: Mapping[str, str] = field(default_factory=dict)
    attribute_owners: Mapping[str, str | None] = field(default_factory=dict)
    object_attributes: Mapping[str, Mapping[str, Value]] = field(default_factory=dict)

    @cached_property
    def by_id(self) -> dict[str, EventRecord]:
        return {e.id: e for e in self.events}

    @cached_property
    def object_types(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.objects.values())))

    @cached_property
    def activities(self) -> tuple[str, ...]:
        return tuple(sorted({e.activity for e in self.events}))

    @cached_property
    def attribute_names(self) -> tuple[str, ...]:
        names = set(self.attribute_kinds)
        for e in self.events:
            names.update(e.vmap)
        return tuple(sorted(names))

    @cached_property
    def ordered_ids(self) -> tuple[str, ...]:
        return order_events(self)

    @cached_property
    def position(self) -> dict[str, int]:
        return {eid: i for i, eid in enumerate(self.ordered_ids)}

    @cached_property
    def events_of_object(self) -> dict[str, list[str]]:
        """Object id -> its event ids in global order."""
        out: dict[str, list[str]] = {o: [] for o in self.objects}
        for eid in self.ordered_ids:
            for o in self.by_id[eid].omap:
                out.setdefault(o, []).append(eid)
        return out

    @cached_property
    def _inferred_owners(self) -> dict[str, str | None]:
        common: dict[str, set[str]] = {}
        for e in self.events:
            types = {self.objects.get(o) for o in e.omap}
            for name in e.vmap:
                if name in common:
                    common[name] &= types
                else:
                    common[name] = set(types)
        return {n: (next(iter(t)) if len(t) == 1 else None) for n, t in common.items()}

    def owner_of(self, name: str) -> str | None:
        """Object type owning an attribute, or None for log-level attributes.

        Inferred as the single object type present on every event carrying the
        attribute; zero or several candidate types leave it unowned.
        """
        if name in self.attribute_owners:
            return self.attribute_owners[name]
        return self._inferred_owners.get(name)

    def kind_of(self, name: str) -> str:
        if name in self.attribute_kinds:
            return self.attribute_kinds[name]
        return infer_kind(e.vmap[name] for e in self.events if name in e.vmap)

    def replace_events(self, events: Iterable[EventRecord], **changes) -> "ObjectCentricLog":
        return ObjectCentricLog(
            events=tuple(events),
            objects=changes.get("objects", self.objects),
            attribute_kinds=changes.get("attribute_kinds", self.attribute_kinds),
            attribute_owners=changes.get("attribute_owners", self.attribute_owners),
            object_attributes=changes.get("object_attributes", self.object_attributes),
        )


def infer_kind(values: Iterable[Value]) -> str:
    """Numeric iff every observed value is a number."""
    seen = False
    for v in values:
        seen = True
        if isinstance(v, str):
            return CATEGORICAL
    return NUMERIC if seen else CATEGORICAL


def order_events(log: ObjectCentricLog) -> tuple[str, ...]:
    """Total order of event ids: timestamp, then event id as tie-break."""
    return tuple(e.id for e in sorted(log.events, key=lambda e: (e.timestamp, e.id)))


def validate_log(log: ObjectCentricLog) -> list[Violation]:
    report: list[Violation] = []
    seen: set[str] = set()
    kinds: dict[str, set[str]] = {}
    for e in log.events:
        if e.id in seen:
            report.append(Violation("duplicate event id", e.id))
        seen.add(e.id)
        if not e.omap:
            report.append(Violation("empty omap", e.id))
        for o in sorted(e.omap):
            if o not in log.objects:
                report.append(Violation("unknown object", e.id, f"references {o!r}"))
        if e.timestamp.tzinfo is None:
            report.append(Violation("naive timestamp", e.id))
        for name, v in e.vmap.items():
            kinds.setdefault(name, set()).add(CATEGORICAL if isinstance(v, str) else NUMERIC)
    for name in sorted(kinds):
        declared = log.attribute_kinds.get(name)
        observed = kinds[name]
        if len(observed) > 1:
            report.append(Violation("mixed attribute kind", name))
        elif declared == NUMERIC and observed != {NUMERIC}:
            report.append(Violation("mixed attribute kind", name, "declared numeric"))
    return report


@dataclass(frozen=True)
class Trace:
    case_id: str
    event_ids: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.event_ids)


@dataclass(frozen=True)
class SingleIdLog:
    """Traces over a shared event store (the source object-centric log)."""

    traces: tuple[Trace, ...]
    store: ObjectCentricLog
    mode: str = "object"
    viewpoint: str = ""

    @cached_property
    def event_ids(self) -> frozenset[str]:
        return frozenset(eid for t in self.traces for eid in t.event_ids)

    @cached_property
    def activities(self) -> tuple[str, ...]:
        return tuple(sorted({self.store.by_id[e].activity for e in self.event_ids}))

    @cached_property
    def attribute_names(self) -> tuple[str, ...]:
        names: set[str] = set()
        for eid in self.event_ids:
            names.update(self.store.by_id[eid].vmap)
        return tuple(sorted(names))

    def trace(self, case_id: str) -> Trace:
        for t in self.traces:
            if t.case_id == case_id:
                return t
        raise KeyError(case_id)

    def events(self, trace: Trace) -> list[EventRecord]:
        return [self.store.by_id[eid] for eid in trace.event_ids]
