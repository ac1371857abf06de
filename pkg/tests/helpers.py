"""Brute-force oracles and random data builders shared by the test suite.

The oracles deliberately avoid the package's graph and incremental code
paths: closures are computed by rescanning every event until nothing
changes, and aggregate features by replaying each prefix from scratch.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone
from statistics import fmean

import numpy as np

from ocpredict.encode import AGG_NUMERIC, AGG_RATIO, COVERAGE, OBJ_COUNT
from ocpredict.model import CATEGORICAL, MISSING, NUMERIC, EventRecord, ObjectCentricLog

T0 = datetime(2020, 1, 1, tzinfo=timezone.utc)


def oracle_closure(log: ObjectCentricLog, o: str) -> set[str]:
    vtype = log.objects[o]
    reached = {o}
    while True:
        grown = set(reached)
        for e in log.events:
            if e.omap & reached:
                grown |= {p for p in e.omap if log.objects[p] != vtype}
        if grown == reached:
            return reached - {o}
        reached = grown


def oracle_trace(log: ObjectCentricLog, o: str) -> list[str]:
    members = oracle_closure(log, o) | {o}
    t_o = min(e.timestamp for e in log.events if o in e.omap)
    chosen = [e for e in log.events if e.timestamp >= t_o and e.omap & members]
    return [e.id for e in sorted(chosen, key=lambda e: (e.timestamp, e.id))]


def oracle_aggregate(log: ObjectCentricLog, prefix: list[EventRecord], feature) -> float | object:
    """Value of one aggregation feature, replaying ``prefix`` from scratch."""
    src = feature.source
    if src == OBJ_COUNT:
        return len({p for e in prefix for p in e.omap if log.objects[p] == feature.object_type})
    if src == COVERAGE:
        objs = {p for e in prefix for p in e.omap if log.objects[p] == feature.object_type}
        if not objs:
            return 0.0
        hit = {p for p in objs if any(e.activity == feature.activity and p in e.omap for e in prefix)}
        return len(hit) / len(objs)
    latest: dict[str, object] = {}
    for e in prefix:
        if feature.attribute in e.vmap:
            for p in e.omap:
                if log.objects[p] == feature.object_type:
                    latest[p] = e.vmap[feature.attribute]
    if src == AGG_NUMERIC:
        return fmean(latest.values()) if latest else MISSING
    if src == AGG_RATIO:
        if not latest:
            return 0.0
        return sum(v == feature.value for v in latest.values()) / len(latest)
    raise AssertionError(f"not an aggregate feature: {feature}")


def random_log(rng: np.random.Generator, n_events: int = 30, n_types: int = 4, per_type: int = 4) -> ObjectCentricLog:
    """Random log with shared objects, timestamp ties and owned attributes."""
    types = [f"T{k}" for k in range(n_types)]
    objects = {f"{t.lower()}_{j}": t for t in types for j in range(int(rng.integers(1, per_type + 1)))}
    ids = sorted(objects)
    acts = ["a", "b", "c", "d"]
    events = []
    minute = 0
    for k in range(n_events):
        minute += int(rng.integers(0, 3))  # zero steps create ties
        omap = frozenset(rng.choice(ids, size=int(rng.integers(1, 4)), replace=False).tolist())
        vmap = {}
        if any(objects[p] == "T1" for p in omap) and rng.random() < 0.7:
            vmap["price"] = float(rng.integers(1, 50))
        if any(objects[p] == "T2" for p in omap) and rng.random() < 0.7:
            vmap["grp"] = str(rng.choice(["x", "y", "z"]))
        if rng.random() < 0.3:
            vmap["note"] = str(rng.choice(["p", "q"]))
        events.append(
            EventRecord(f"ev{k:03d}", str(rng.choice(acts)), T0 + timedelta(minutes=minute), vmap, omap)
        )
    rng.shuffle(events)
    used = {a for e in events for a in e.vmap}
    kinds = {"price": NUMERIC, "grp": CATEGORICAL, "note": CATEGORICAL}
    owners = {"price": "T1", "grp": "T2", "note": None}
    return ObjectCentricLog(
        tuple(events),
        objects,
        {a: kinds[a] for a in used},
        {a: owners[a] for a in used},
    )


def random_trace(rng: np.random.Generator, length: int, activities=("a", "b", "c", "d")) -> list[EventRecord]:
    t = T0
    out = []
    for k in range(length):
        t += timedelta(minutes=int(rng.integers(0, 600)))
        vmap = {"flag": str(rng.choice(["on", "off"]))} if rng.random() < 0.4 else {}
        out.append(EventRecord(f"x{k}", str(rng.choice(activities)), t, vmap, frozenset({"o"})))
    return out


# (criterion, passed, detail) rows collected by the acceptance suite and
# printed in the terminal summary
ACCEPTANCE: list[tuple[int, bool, str]] = []


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE.append((criterion, bool(passed), detail))
