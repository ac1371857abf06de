"""Command-line entry point: ``ocpredict <stage> --config run.yaml``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from .explain import ExplanationBucket, export_boxplot
from .ingest import FlatCsvSchema, write_flat_csv, write_ocel_json
from .pipeline import OUTPUT_ENV, STAGES, ConfigError, PipelineConfig, PipelineError, run_pipeline
from .synthetic import SyntheticSpec, generate_synthetic

EXIT_OK, EXIT_INVALID, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4

log = logging.getLogger("ocpredict")


def _set_dotted(d: dict, key: str, value) -> None:
    parts = key.split(".")
    for p in parts[:-1]:
        d = d.setdefault(p, {})
    d[parts[-1]] = value


def _overrides(args) -> dict:
    out: dict = {}
    for flag in ("input", "schema", "viewpoint", "mode", "seed", "workers"):
        v = getattr(args, flag, None)
        if v is not None:
            out[flag] = v
    if args.output is not None:
        out["output_dir"] = args.output
    for item in args.set or ():
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        _set_dotted(out, k.strip(), yaml.safe_load(v))
    return out


def _config(args) -> PipelineConfig:
    over = _overrides(args)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            base = yaml.safe_load(fh) or {}
        if not isinstance(base, dict):
            raise ConfigError("config file must hold a mapping")
    else:
        base = {}
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            base[k] = {**base[k], **v}
        else:
            base[k] = v
    return PipelineConfig.from_dict(base)


def _stage(args) -> int:
    cfg = _config(args)
    until = "explain" if args.command == "run" else args.command
    if args.command == "explain":
        cfg.explain.enabled = True
    report = run_pipeline(cfg, until=until)
    print(json.dumps({"metrics": report.metrics, "paths": report.paths}, indent=1, sort_keys=True, default=str))
    return EXIT_OK


def _generate(args) -> int:
    spec = SyntheticSpec(
        n_requisitions=args.requisitions,
        fan_out=tuple(args.fan_out),
        coefficient=args.coefficient,
        noise_sd=args.noise_sd,
        requisitions_per_contract=args.per_contract,
    )
    ocel = generate_synthetic(spec, args.seed if args.seed is not None else 0)
    out = Path(args.output or "synthetic.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.format == "ocel":
        out.write_bytes(write_ocel_json(ocel))
    else:
        schema = FlatCsvSchema(
            object_columns=list(ocel.object_types),
            timestamp_format="%Y-%m-%d %H:%M:%S",
            kinds=dict(ocel.attribute_kinds),
            owners=dict(ocel.attribute_owners),
        )
        out.write_bytes(write_flat_csv(ocel, schema))
        out.with_suffix(".schema").write_text(schema.dumps(), encoding="utf-8")
    print(str(out))
    return EXIT_OK


def _plot(args) -> int:
    src = Path(args.buckets)
    doc = json.loads(src.read_text(encoding="utf-8"))
    buckets = [ExplanationBucket(b["feature"], b["label"], samples=list(b["samples"])) for b in doc]
    table, svg = export_boxplot(buckets, args.top_k, title=args.title or "")
    out = Path(args.output) if args.output else src.parent
    out.mkdir(parents=True, exist_ok=True)
    (out / "boxplot.csv").write_bytes(table)
    (out / "boxplot.svg").write_text(svg, encoding="utf-8")
    print(str(out / "boxplot.svg"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ocpredict", description="Object-centric predictive process monitoring.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "run"):
        s = sub.add_parser(name, help=f"run the pipeline {'end to end' if name == 'run' else 'through ' + name}")
        s.add_argument("--config", help="YAML pipeline config")
        s.add_argument("--input")
        s.add_argument("--schema", help="flat CSV schema sidecar")
        s.add_argument("--viewpoint")
        s.add_argument("--mode", choices=["naive", "object", "object-aggr"])
        s.add_argument("--seed", type=int)
        s.add_argument("--workers", type=int)
        s.add_argument("--output", help=f"output directory (default ${OUTPUT_ENV} or ./ocpredict-out)")
        s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key (dotted)")
        s.set_defaults(func=_stage)
    g = sub.add_parser("generate", help="write a synthetic object-centric log")
    g.add_argument("--requisitions", type=int, default=100)
    g.add_argument("--fan-out", type=int, nargs=2, default=(1, 5), metavar=("MIN", "MAX"))
    g.add_argument("--coefficient", type=float, default=10.0)
    g.add_argument("--noise-sd", type=float, default=4.0)
    g.add_argument("--per-contract", type=int, default=1)
    g.add_argument("--format", choices=["csv", "ocel"], default="csv")
    g.add_argument("--seed", type=int)
    g.add_argument("--workers", type=int)
    g.add_argument("--output")
    g.set_defaults(func=_generate)
    pl = sub.add_parser("plot", help="render boxplots from a buckets.json file")
    pl.add_argument("buckets")
    pl.add_argument("--top-k", type=int, default=10)
    pl.add_argument("--title")
    pl.add_argument("--output")
    pl.set_defaults(func=_plot)
    return p


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, PipelineError):
        exc = exc.cause
    if isinstance(exc, ConfigError):
        return EXIT_INVALID
    if isinstance(exc, (ValueError, OSError, KeyError)):
        return EXIT_DATA
    return EXIT_INTERNAL


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes
        code = _exit_code(exc)
        if code == EXIT_INTERNAL:
            log.debug("traceback", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
