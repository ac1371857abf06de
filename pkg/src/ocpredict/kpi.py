"""KPI functions over traces and dataset labeling.

All durations are fractional days. ``i`` is the 1-based number of events
already observed, as in ``T(sigma, i)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime
from statistics import fmean
from typing import Any, Callable, Sequence

from .ingest import format_value, parse_timestamp
from .model import EventRecord, SingleIdLog

DAY = 86400.0

REMAINING_TIME = "remaining-time"
ACTIVITY_OCCURRENCE = "activity-occurrence"
ATTRIBUTE_VALUE_OCCURRENCE = "attribute-value-occurrence"
PATH_TIME = "path-time"
ATTRIBUTE_DELTA = "attribute-delta"
CUSTOM = "custom"

KpiFunction = Callable[[Sequence[EventRecord], int], Any]
_REGISTRY: dict[str, tuple[KpiFunction, bool]] = {}


class LabelError(ValueError):
    pass


def register_kpi(name: str, classification: bool = False):
    """Decorator adding a custom KPI ``fn(trace_events, i) -> value | None``."""

    def deco(fn: KpiFunction) -> KpiFunction:
        _REGISTRY[name] = (fn, classification)
        return fn

    return deco


def _days(a: datetime, b: datetime) -> float:
    return (b - a).total_seconds() / DAY


def _check_index(trace: Sequence[EventRecord], i: int) -> None:
    if not 1 <= i <= len(trace):
        raise IndexError(f"prefix length {i} outside 1..{len(trace)}")


def remaining_time(trace: Sequence[EventRecord], i: int) -> float:
    _check_index(trace, i)
    return _days(trace[i - 1].timestamp, trace[-1].timestamp)


def activity_occurrence(trace: Sequence[EventRecord], i: int, activity: str) -> bool:
    _check_index(trace, i)
    return any(e.activity == activity for e in trace[i:])


def _same_value(v: Any, value: Any) -> bool:
    if v == value:
        return True
    return format_value(v) == (value if isinstance(value, str) else format_value(value))


def attribute_value_occurrence(trace: Sequence[EventRecord], i: int, attribute: str, value: Any) -> bool:
    _check_index(trace, i)
    return any(attribute in e.vmap and _same_value(e.vmap[attribute], value) for e in trace[i:])


def path_time(trace: Sequence[EventRecord], source_activity: str, target_activity: str) -> float | None:
    """First ``source`` to last ``target``; None when undefined."""
    first = next((e for e in trace if e.activity == source_activity), None)
    last = next((e for e in reversed(trace) if e.activity == target_activity), None)
    if first is None or last is None or last.timestamp < first.timestamp:
        return None
    return _days(first.timestamp, last.timestamp)


def attribute_delta(
    trace: Sequence[EventRecord],
    target_activity: str,
    due_attribute: str,
    source_activity: str | None = None,
) -> float | None:
    """Mean signed delay (days) of target events against their due date.

    The due date of a target event is its own ``due_attribute`` or, failing
    that, the latest earlier assignment in the trace. With ``source_activity``
    only target events from the first source occurrence on are counted.
    """
    start = 0
    if source_activity is not None:
        start = next((k for k, e in enumerate(trace) if e.activity == source_activity), None)
        if start is None:
            return None
    due_raw = None
    deltas = []
    for k, e in enumerate(trace):
        if due_attribute in e.vmap:
            due_raw = e.vmap[due_attribute]
        if k < start or e.activity != target_activity:
            continue
        if due_raw is None:
            raise LabelError(f"event {e.id}: no {due_attribute!r} value available")
        try:
            due = parse_timestamp(str(due_raw))
        except ValueError as exc:
            raise LabelError(f"event {e.id}: unparseable {due_attribute!r} value {due_raw!r}") from exc
        deltas.append(_days(due, e.timestamp))
    return fmean(deltas) if deltas else None


@dataclass(frozen=True)
class KpiSpec:
    kind: str
    activity: str | None = None
    attribute: str | None = None
    value: Any = None
    source: str | None = None
    target: str | None = None
    due_attribute: str | None = None
    name: str | None = None
    units: str = "days"

    @property
    def classification(self) -> bool:
        if self.kind == CUSTOM:
            return _REGISTRY[self.name][1]
        return self.kind in (ACTIVITY_OCCURRENCE, ATTRIBUTE_VALUE_OCCURRENCE)

    @property
    def per_trace(self) -> bool:
        """Label is a constant of the whole trace rather than of the prefix."""
        return self.kind in (PATH_TIME, ATTRIBUTE_DELTA)

    @classmethod
    def from_dict(cls, d: dict) -> "KpiSpec":
        d = dict(d)
        d["kind"] = d["kind"].lower().replace("_", "-")
        return cls(**d)

    def validate(self, ulog: SingleIdLog) -> list[str]:
        store = ulog.store
        problems = []
        acts = set(store.activities)
        for label, act in (("activity", self.activity), ("source", self.source), ("target", self.target)):
            if act is not None and act not in acts:
                problems.append(f"{label} activity {act!r} not in log")
        for attr in (self.attribute, self.due_attribute):
            if attr is not None and attr not in store.attribute_names:
                problems.append(f"attribute {attr!r} not in log")
        if self.kind == CUSTOM and self.name not in _REGISTRY:
            problems.append(f"no KPI registered as {self.name!r}")
        known = (REMAINING_TIME, ACTIVITY_OCCURRENCE, ATTRIBUTE_VALUE_OCCURRENCE, PATH_TIME, ATTRIBUTE_DELTA, CUSTOM)
        if self.kind not in known:
            problems.append(f"unknown KPI kind {self.kind!r}")
        return problems

    def __call__(self, trace: Sequence[EventRecord], i: int) -> Any:
        k = self.kind
        if k == REMAINING_TIME:
            return remaining_time(trace, i)
        if k == ACTIVITY_OCCURRENCE:
            return activity_occurrence(trace, i, self.activity)
        if k == ATTRIBUTE_VALUE_OCCURRENCE:
            return attribute_value_occurrence(trace, i, self.attribute, self.value)
        if k == PATH_TIME:
            return path_time(trace, self.source, self.target)
        if k == ATTRIBUTE_DELTA:
            return attribute_delta(trace, self.target, self.due_attribute, self.source)
        if k == CUSTOM:
            return _REGISTRY[self.name][0](trace, i)
        raise LabelError(f"unknown KPI kind {k!r}")

    def horizon(self, trace: Sequence[EventRecord]) -> int:
        """Number of leading prefixes that may be labeled for a per-trace KPI."""
        if self.kind == PATH_TIME:
            last = max((k for k, e in enumerate(trace) if e.activity == self.target), default=None)
            return 0 if last is None else last
        return len(trace)


def label_dataset(instances, ulog: SingleIdLog, spec: KpiSpec, reference: SingleIdLog | None = None):
    """Attach ``y`` to each instance, dropping those whose label is undefined.

    With ``reference`` the KPI is evaluated on the reference log's trace of the
    same case (e.g. the object-centric trace when the instances come from a
    naive unfolding); a prefix maps to the reference events up to its last
    event in global order. Path-time prefixes at or after the final target
    occurrence are dropped.
    """
    ref = reference or ulog
    store = ref.store
    pos = store.position
    traces = {t.case_id: ref.events(t) for t in ref.traces}
    own = {t.case_id: t for t in ulog.traces}
    cache: dict[str, tuple[Any, int]] = {}
    out = []
    for inst in instances:
        events = traces.get(inst.case_id)
        if events is None:
            continue
        if reference is None:
            i = inst.prefix_len
        else:
            last = inst.last_event or own[inst.case_id].event_ids[inst.prefix_len - 1]
            i = sum(pos[e.id] <= pos[last] for e in events)
            if i == 0:
                continue
        if spec.per_trace:
            if inst.case_id not in cache:
                cache[inst.case_id] = (spec(events, len(events)), spec.horizon(events))
            y, horizon = cache[inst.case_id]
            if y is None or i > horizon:
                continue
        else:
            y = spec(events, i)
            if y is None:
                continue
        out.append(replace(inst, y=y))
    return out
