"""Seeded procurement-style object-centric logs with a planted order-count effect.

Each requisition belongs to a contract, spawns ``k`` orders in one batch
event, receives one goods line per order and a single invoice covering all
receipts. The wait before the invoice is cleared is
``base_wait + coefficient * k + noise`` days, so the number of related orders
carries real signal about the requisition's end-to-end time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

import numpy as np

from .model import CATEGORICAL, NUMERIC, EventRecord, ObjectCentricLog

CREATED = "Purchase Requisition Line Created"
GROUP_CHANGED = "Purchase Requisition Group Changed"
ORDER_CREATED = "Purchase Order Line Creation"
GOODS = "Goods Line Registered"
INVOICE = "Invoice Registered"
CLEARED = "Invoice Cleared"

KINDS = {
    "req_group": CATEGORICAL,
    "order_price": NUMERIC,
    "purch_group": CATEGORICAL,
    "rec_quantity": NUMERIC,
}
OWNERS = {"req_group": "Requisition", "order_price": "Order", "purch_group": "Order", "rec_quantity": "Receipt"}


@dataclass(frozen=True)
class SyntheticSpec:
    n_requisitions: int = 100
    fan_out: tuple[int, int] = (1, 5)
    requisitions_per_contract: int = 1
    coefficient: float = 10.0
    base_wait: float = 20.0
    noise_sd: float = 4.0
    group_change_prob: float = 0.3
    missing_price_prob: float = 0.0
    span_days: float = 365.0
    start: datetime = datetime(2021, 1, 4, tzinfo=timezone.utc)
    req_groups: tuple[str, ...] = ("G1", "G2", "G3")
    purch_groups: tuple[str, ...] = ("100_L50", "200_L10", "300_L20", "400_L30")

    def __post_init__(self):
        lo, hi = self.fan_out
        if self.n_requisitions < 1 or self.requisitions_per_contract < 1 or lo < 1 or hi < lo:
            raise ValueError("counts and fan-out bounds must be >= 1 with min <= max")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        if "fan_out" in d:
            f = d["fan_out"]
            d["fan_out"] = (int(f), int(f)) if isinstance(f, (int, float)) else tuple(int(v) for v in f)
        for key in ("req_groups", "purch_groups"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class _Builder:
    events: list[EventRecord] = field(default_factory=list)
    objects: dict[str, str] = field(default_factory=dict)

    def obj(self, prefix: str, otype: str) -> str:
        oid = f"{prefix}{sum(1 for t in self.objects.values() if t == otype) + 1}"
        self.objects[oid] = otype
        return oid

    def event(self, activity: str, ts: datetime, omap, vmap=None) -> None:
        self.events.append(EventRecord(f"e{len(self.events) + 1}", activity, ts, dict(vmap or {}), frozenset(omap)))


def _hours(rng, lo: float, hi: float) -> timedelta:
    return timedelta(seconds=int(rng.uniform(lo, hi) * 3600))


def generate_synthetic(spec: SyntheticSpec = SyntheticSpec(), seed: int = 0) -> ObjectCentricLog:
    rng = np.random.default_rng(seed)
    b = _Builder()
    contract = None
    for n in range(spec.n_requisitions):
        if n % spec.requisitions_per_contract == 0:
            contract = b.obj("c", "Contract")
        rq = b.obj("rq", "Requisition")
        t = spec.start + timedelta(seconds=int(rng.uniform(0, spec.span_days) * 86400))
        b.event(CREATED, t, {contract, rq}, {"req_group": str(rng.choice(spec.req_groups))})
        if rng.random() < spec.group_change_prob:
            t += _hours(rng, 0.5, 3)
            b.event(GROUP_CHANGED, t, {rq}, {"req_group": str(rng.choice(spec.req_groups))})
        k = int(rng.integers(spec.fan_out[0], spec.fan_out[1] + 1))
        orders = [b.obj("o", "Order") for _ in range(k)]
        t += _hours(rng, 1, 4)
        b.event(ORDER_CREATED, t, {rq, *orders})
        receipts = []
        for o in orders:
            r = b.obj("r", "Receipt")
            receipts.append(r)
            t += _hours(rng, 1, 6)
            vmap = {
                "purch_group": str(rng.choice(spec.purch_groups)),
                "rec_quantity": float(rng.integers(1, 20)),
            }
            price = float(round(rng.lognormal(5.0, 0.5)))
            if rng.random() >= spec.missing_price_prob:
                vmap["order_price"] = price
            b.event(GOODS, t, {o, r}, vmap)
        inv = b.obj("i", "Invoice")
        t += _hours(rng, 1, 6)
        b.event(INVOICE, t, {*receipts, inv})
        wait = spec.base_wait + spec.coefficient * k + rng.normal(0.0, spec.noise_sd)
        t += timedelta(seconds=int(max(wait, 0.1) * 86400))
        b.event(CLEARED, t, {inv})
    used = {a for e in b.events for a in e.vmap}
    return ObjectCentricLog(
        events=tuple(b.events),
        objects=dict(b.objects),
        attribute_kinds={a: k for a, k in KINDS.items() if a in used},
        attribute_owners={a: o for a, o in OWNERS.items() if a in used},
    )
