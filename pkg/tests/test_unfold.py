from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ocpredict.model import EventRecord
from ocpredict.unfold import (
    UnfoldError,
    UnfoldMode,
    build_trace,
    direct_related,
    first_timestamp,
    related_closure,
    unfold_log,
)
from helpers import oracle_closure, oracle_trace, random_log

RQ1 = ["e3", "e4", "e5", "e6", "e8", "e9", "e10", "e11", "e12", "e13", "e14", "e15", "e16", "e17"]


def test_first_timestamp(purchasing):
    assert first_timestamp(purchasing, "rq1") == datetime(2017, 7, 15, 12, tzinfo=timezone.utc)
    assert first_timestamp(purchasing, "c1") == datetime(2017, 7, 11, 9, tzinfo=timezone.utc)
    with pytest.raises(Exception):
        first_timestamp(purchasing, "nope")


def test_direct_related(purchasing):
    assert direct_related(purchasing, "rq1", "Requisition") == {"c1", "o2", "o4"}
    assert direct_related(purchasing, "i3", "Requisition") == {"r4"}


def test_closure_of_rq1(purchasing):
    assert related_closure(purchasing, "rq1") == {"c1", "o1", "o2", "o4", "r1", "r2", "r3", "i1", "i2"}


def test_naive_unfolding(purchasing):
    ulog = unfold_log(purchasing, "Requisition", "naive")
    assert [list(t.event_ids) for t in ulog.traces] == [["e3", "e6", "e10", "e11"], ["e4", "e7", "e19"]]


def test_object_unfolding_matches_oracle(purchasing):
    ulog = unfold_log(purchasing, "Requisition", UnfoldMode.OBJECT)
    assert list(ulog.trace("rq1").event_ids) == RQ1
    assert "e1" not in RQ1 and "e2" not in RQ1
    for t in ulog.traces:
        assert list(t.event_ids) == oracle_trace(purchasing, t.case_id)
    # the formal rule pulls c1's later events (e5 onward) into rq2's trace
    assert "e5" in ulog.trace("rq2").event_ids


def test_contract_viewpoint_single_trace(purchasing):
    for mode in UnfoldMode:
        assert len(unfold_log(purchasing, "Contract", mode).traces) == 1


def test_unknown_viewpoint(purchasing):
    with pytest.raises(UnfoldError):
        unfold_log(purchasing, "Foo", "object")


def test_mode_aliases():
    assert UnfoldMode.parse("object_aggr") is UnfoldMode.OBJECT_AGGR
    with pytest.raises(ValueError):
        UnfoldMode.parse("graph")


def test_max_hops_truncates(purchasing):
    one = related_closure(purchasing, "rq1", max_hops=1)
    assert one == {"c1", "o2", "o4"}
    assert one <= related_closure(purchasing, "rq1")


def test_single_event_object():
    t = datetime(2020, 1, 1, tzinfo=timezone.utc)
    from ocpredict.model import ObjectCentricLog

    log = ObjectCentricLog((EventRecord("e", "a", t, {}, frozenset({"x"})),), {"x": "T"})
    assert related_closure(log, "x") == set()
    assert build_trace(log, "x", set()).event_ids == ("e",)


@given(st.integers(0, 100_000))
def test_unfolding_invariants_on_random_logs(seed):
    log = random_log(np.random.default_rng(seed), n_events=30)
    vtype = "T0"
    naive = unfold_log(log, vtype, "naive")
    obj = unfold_log(log, vtype, "object", workers=2)
    pos = log.position
    for t in obj.traces:
        o = t.case_id
        closure = related_closure(log, o)
        assert closure == oracle_closure(log, o)
        assert all(log.objects[p] != vtype for p in closure)
        assert list(t.event_ids) == oracle_trace(log, o)
        t_o = first_timestamp(log, o)
        members = closure | {o}
        for eid in t.event_ids:
            e = log.by_id[eid]
            assert e.timestamp >= t_o and e.omap & members
        assert [pos[e] for e in t.event_ids] == sorted(pos[e] for e in t.event_ids)
        # naive trace is a subsequence
        it = iter(t.event_ids)
        assert all(eid in it for eid in naive.trace(o).event_ids)


@given(st.integers(0, 100_000), st.integers(5, 30))
def test_closure_monotone_in_events(seed, keep):
    log = random_log(np.random.default_rng(seed), n_events=30)
    events = sorted(log.events, key=lambda e: e.id)
    small = log.replace_events(events[:keep])
    for o, t in log.objects.items():
        if t == "T0" and small.events_of_object.get(o):
            assert related_closure(small, o) <= related_closure(log, o)
