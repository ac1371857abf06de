"""Unfold the running-example log and print traces and aggregate features."""

from ocpredict.encode import aggregate_feature_indices, build_dataset, build_schema
from ocpredict.fixtures import load_purchasing_log
from ocpredict.ingest import format_value
from ocpredict.model import MISSING
from ocpredict.unfold import unfold_log


def main() -> None:
    log = load_purchasing_log()
    for mode in ("naive", "object"):
        ulog = unfold_log(log, "Requisition", mode)
        print(f"{mode} unfolding:")
        for t in ulog.traces:
            print(f"  {t.case_id}: <{', '.join(t.event_ids)}>")
    ulog = unfold_log(log, "Requisition", "object-aggr")
    schema = build_schema(ulog)
    agg = aggregate_feature_indices(schema)
    print("\naggregates along rq1 (non-zero only):")
    for inst in build_dataset(ulog, schema):
        if inst.case_id != "rq1":
            continue
        cells = [
            f"{schema.names[j]}={format_value(inst.x[j])}"
            for j in agg
            if inst.x[j] is not MISSING and inst.x[j] != 0
        ]
        print(f"  {inst.last_event:>4}: {', '.join(cells) or '-'}")


if __name__ == "__main__":
    main()
