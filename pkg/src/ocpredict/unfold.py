"""Viewpoint-centred unfolding of object-centric logs into single-id logs."""

from __future__ import annotations

import enum
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime

from .model import ObjectCentricLog, SingleIdLog, Trace


class UnfoldError(ValueError):
    pass


class UnfoldMode(str, enum.Enum):
    NAIVE = "naive"
    OBJECT = "object"
    OBJECT_AGGR = "object-aggr"

    @classmethod
    def parse(cls, value: "str | UnfoldMode") -> "UnfoldMode":
        if isinstance(value, cls):
            return value
        aliases = {"objectcentric": cls.OBJECT, "objectcentricaggregated": cls.OBJECT_AGGR, "aggr": cls.OBJECT_AGGR}
        key = str(value).lower().replace("_", "-")
        try:
            return cls(key)
        except ValueError:
            if key.replace("-", "") in aliases:
                return aliases[key.replace("-", "")]
            raise UnfoldError(f"unknown unfold mode {value!r}") from None


def relation_graph(log: ObjectCentricLog) -> dict[str, set[str]]:
    """Symmetric co-occurrence adjacency between object ids (no self loops)."""
    adj: dict[str, set[str]] = {o: set() for o in log.objects}
    for e in log.events:
        for o in e.omap:
            adj.setdefault(o, set()).update(p for p in e.omap if p != o)
    return adj


def first_timestamp(log: ObjectCentricLog, o: str) -> datetime:
    eids = log.events_of_object.get(o)
    if not eids:
        raise UnfoldError(f"object {o!r} is not referenced by any event")
    return log.by_id[eids[0]].timestamp


def direct_related(log: ObjectCentricLog, o: str, viewpoint_type: str, graph=None) -> set[str]:
    graph = graph if graph is not None else relation_graph(log)
    return {p for p in graph.get(o, ()) if log.objects[p] != viewpoint_type}


def related_closure(log: ObjectCentricLog, o: str, graph=None, max_hops: int | None = None) -> set[str]:
    """Objects reachable from ``o`` through bridges whose type differs from ``o``'s.

    ``max_hops`` truncates the union after that many applications of the
    direct relation; ``None`` runs to the fixed point.
    """
    if o not in log.objects:
        raise UnfoldError(f"unknown object {o!r}")
    graph = graph if graph is not None else relation_graph(log)
    vtype = log.objects[o]
    seen = {o}
    frontier = deque([(o, 0)])
    while frontier:
        cur, hops = frontier.popleft()
        if max_hops is not None and hops >= max_hops:
            continue
        for nxt in graph.get(cur, ()):
            if nxt not in seen and log.objects[nxt] != vtype:
                seen.add(nxt)
                frontier.append((nxt, hops + 1))
    seen.discard(o)
    return seen


def build_trace(log: ObjectCentricLog, o: str, closure: set[str]) -> Trace:
    t_o = first_timestamp(log, o)
    members = closure | {o}
    eids: set[str] = set()
    for m in members:
        for eid in log.events_of_object.get(m, ()):
            if log.by_id[eid].timestamp >= t_o:
                eids.add(eid)
    pos = log.position
    return Trace(o, tuple(sorted(eids, key=pos.__getitem__)))


def naive_trace(log: ObjectCentricLog, o: str) -> Trace:
    return Trace(o, tuple(log.events_of_object.get(o, ())))


def unfold_log(
    log: ObjectCentricLog,
    viewpoint_type: str,
    mode: "UnfoldMode | str" = UnfoldMode.OBJECT,
    max_hops: int | None = None,
    workers: int = 1,
) -> SingleIdLog:
    mode = UnfoldMode.parse(mode)
    if viewpoint_type not in log.object_types:
        raise UnfoldError(f"unknown viewpoint type {viewpoint_type!r}; known: {', '.join(log.object_types)}")
    viewpoints = [o for o, t in log.objects.items() if t == viewpoint_type and log.events_of_object.get(o)]

    if mode is UnfoldMode.NAIVE:
        traces = [naive_trace(log, o) for o in viewpoints]
    else:
        graph = relation_graph(log)
        log.position  # warm shared caches before threads read them

        def one(o: str) -> Trace:
            return build_trace(log, o, related_closure(log, o, graph, max_hops))

        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                traces = list(pool.map(one, viewpoints))
        else:
            traces = [one(o) for o in viewpoints]

    pos = log.position
    traces.sort(key=lambda t: (pos[t.event_ids[0]], t.case_id))
    return SingleIdLog(tuple(traces), log, mode.value, viewpoint_type)
