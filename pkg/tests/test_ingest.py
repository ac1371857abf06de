import json
from collections import Counter
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ocpredict.fixtures import purchasing_bytes, purchasing_schema
from ocpredict.ingest import (
    OTHER,
    FlatCsvSchema,
    KindError,
    ParseError,
    ReferentialError,
    drop_constant_attributes,
    drop_sparse_attributes,
    load_log,
    missing_fraction,
    pareto_reduce,
    parse_flat_csv,
    parse_ocel_json,
    write_flat_csv,
    write_ocel_json,
    write_single_id_csv,
)
from ocpredict.model import EventRecord, ObjectCentricLog, SingleIdLog, validate_log
from ocpredict.unfold import unfold_log
from helpers import random_log

UTC = timezone.utc


def _content(log):
    return {
        e.id: (e.activity, e.timestamp, e.omap, dict(e.vmap)) for e in log.events
    }


def test_flat_csv_multi_id_cells_and_blanks(purchasing):
    e13 = purchasing.by_id["e13"]
    assert e13.omap == {"r1", "r2", "i1"}
    assert "order_price" not in purchasing.by_id["e14"].vmap
    assert purchasing.by_id["e5"].vmap["order_price"] == 100.0
    assert purchasing.by_id["e5"].vmap["order_delivery_month"] == "7"


def test_flat_csv_round_trip(purchasing):
    again = parse_flat_csv(write_flat_csv(purchasing, purchasing_schema()), purchasing_schema())
    assert _content(again) == _content(purchasing)


def test_ocel_round_trip(purchasing):
    doc = write_ocel_json(purchasing)
    again = parse_ocel_json(doc, kinds={"order_delivery_month": "categorical"})
    assert _content(again) == _content(purchasing)
    assert len(again.objects) == 14 and len(again.object_types) == 5
    assert validate_log(again) == []


def test_ocel_empty_log():
    log = parse_ocel_json(b'{"ocel:events":{},"ocel:objects":{}}')
    assert log.events == () and dict(log.objects) == {}


def test_ocel_unknown_object_names_event():
    doc = {
        "ocel:events": {"x1": {"ocel:activity": "a", "ocel:timestamp": "2020-01-01T00:00:00Z", "ocel:omap": ["zz"]}},
        "ocel:objects": {},
    }
    with pytest.raises(ReferentialError) as err:
        parse_ocel_json(json.dumps(doc))
    assert err.value.event_id == "x1"


def test_ocel_malformed_json_reports_byte_offset():
    with pytest.raises(ParseError) as err:
        parse_ocel_json('{"ocel:events": {"é": ]}')
    assert err.value.offset == len('{"ocel:events": {"é": '.encode())


def test_ocel_object_attributes_are_kept_inert():
    doc = {
        "ocel:events": {"x1": {"ocel:activity": "a", "ocel:timestamp": "2020-01-01T10:00:00+02:00", "ocel:omap": ["o"]}},
        "ocel:objects": {"o": {"ocel:type": "T", "ocel:ovmap": {"colour": "red"}}},
    }
    log = parse_ocel_json(json.dumps(doc))
    assert log.object_attributes["o"] == {"colour": "red"}
    assert log.by_id["x1"].timestamp == datetime(2020, 1, 1, 8, tzinfo=UTC)


def test_flat_csv_duplicate_id():
    text = "id,activity,timestamp,T\ne1,a,2020-01-01 00:00,o\ne1,b,2020-01-01 00:01,o\n"
    with pytest.raises(ParseError, match="duplicate"):
        parse_flat_csv(text, FlatCsvSchema(["T"]))


def test_flat_csv_bad_timestamp_row_number():
    text = "id,activity,timestamp,T\ne1,a,2020-01-01 00:00,o\ne2,b,yesterday,o\n"
    with pytest.raises(ParseError) as err:
        parse_flat_csv(text, FlatCsvSchema(["T"]))
    assert err.value.row == 3


def test_schema_sidecar_round_trip():
    s = FlatCsvSchema(["A", "B"], timestamp_format="%d/%m/%Y", kinds={"x": "numeric"}, owners={"x": "A", "y": None})
    assert FlatCsvSchema.parse(s.dumps()) == s
    with pytest.raises(ParseError):
        FlatCsvSchema.parse("bogus = 1")


def test_load_log_needs_sidecar(tmp_path):
    p = tmp_path / "log.csv"
    p.write_bytes(purchasing_bytes())
    with pytest.raises(Exception, match="sidecar"):
        load_log(p)
    (tmp_path / "log.schema").write_text(purchasing_schema().dumps())
    assert len(load_log(p).events) == 21


def test_single_id_csv_rows(purchasing):
    naive = unfold_log(purchasing, "Requisition", "naive")
    rows = write_single_id_csv(naive).decode().strip().splitlines()
    assert len(rows) == 1 + 7
    assert rows[0].startswith("case_id,event_id")
    empty = SingleIdLog((), purchasing)
    assert len(write_single_id_csv(empty).decode().strip().splitlines()) == 1


# -- preprocessing --------------------------------------------------------------


def _log_with(values, name="cat", kind="categorical"):
    t = datetime(2020, 1, 1, tzinfo=UTC)
    events = [
        EventRecord(f"e{i:03d}", "a", t + timedelta(minutes=i), {name: v} if v is not None else {}, frozenset({"o"}))
        for i, v in enumerate(values)
    ]
    return ObjectCentricLog(tuple(events), {"o": "T"}, {name: kind})


def test_pareto_keeps_top_values():
    vals = ["A"] * 50 + ["B"] * 30 + ["C"] * 15 + ["D"] * 5
    out = pareto_reduce(_log_with(vals), "cat", 0.8)
    assert Counter(e.vmap["cat"] for e in out.events) == {"A": 50, "B": 30, OTHER: 20}
    assert pareto_reduce(out, "cat", 0.8).events == out.events


def test_pareto_boundaries():
    single = _log_with(["A"] * 10)
    assert pareto_reduce(single, "cat", 0.8).events == single.events
    vals = _log_with(["A", "B", "C"])
    assert pareto_reduce(vals, "cat", 1.0).events == vals.events
    with pytest.raises(KindError):
        pareto_reduce(_log_with([1.0, 2.0], kind="numeric"), "cat", 0.8)


@given(st.lists(st.sampled_from("ABCDEFG"), min_size=1, max_size=60), st.floats(0.05, 1.0))
def test_pareto_coverage_and_idempotence(values, coverage):
    log = _log_with(values)
    out = pareto_reduce(log, "cat", coverage)
    kept = Counter(e.vmap["cat"] for e in out.events)
    kept.pop(OTHER, None)
    assert sum(kept.values()) >= coverage * len(values) - 1e-9
    assert pareto_reduce(out, "cat", coverage).events == out.events


def test_sparse_drop_one_in_twentyone():
    log = _log_with(["v"] + [None] * 20, name="rare")
    assert missing_fraction(log, "rare") == pytest.approx(20 / 21)
    out, dropped = drop_sparse_attributes(log, 0.8)
    assert dropped == ["rare"]
    again, dropped2 = drop_sparse_attributes(out, 0.8)
    assert dropped2 == [] and again.events == out.events
    _, none = drop_sparse_attributes(log, 1.0)
    assert none == []


def test_sparse_scope_is_owner_type(purchasing):
    # order attributes are blank off order events, yet never count as sparse
    assert missing_fraction(purchasing, "order_price") == 0.0
    _, dropped = drop_sparse_attributes(purchasing, 0.8)
    assert dropped == []


def test_drop_constant(purchasing):
    log = _log_with(["X"] * 5, name="const")
    _, dropped = drop_constant_attributes(log)
    assert dropped == ["const"]
    _, dropped = drop_constant_attributes(purchasing)
    assert "order_price" not in dropped


@given(st.integers(0, 10_000), st.floats(0.0, 1.0))
def test_drops_commute(seed, threshold):
    log = random_log(np.random.default_rng(seed), n_events=30)
    a, _ = drop_constant_attributes(drop_sparse_attributes(log, threshold)[0])
    b, _ = drop_sparse_attributes(drop_constant_attributes(log)[0], threshold)
    assert _content(a) == _content(b)
