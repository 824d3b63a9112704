"""``dspace`` command line.

Data goes to stdout, logs to stderr. Exit codes: 0 success, 1 runtime
failure, 2 configuration error, 3 transfer criteria not met, 64 usage
error, 65 schema violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import documents, metrics
from .engine import DiscoverySpace, create_space, samples_to_csv
from .errors import ConfigurationError, DSpaceError, SchemaError
from .optimizers import Objective, make_optimizer, run_optimization
from .space import canonical_id
from .store import SampleStore, dumps
from .transfer import run_rssc

log = logging.getLogger("dspace")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NO_TRANSFER = 3
EXIT_USAGE = 64
EXIT_SCHEMA = 65


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise UsageError(message)


def emit_json(doc: dict) -> None:
    out = dict(doc)
    out["schema_version"] = documents.SCHEMA_VERSION
    sys.stdout.write(dumps(out) + "\n")


# -- subcommands -------------------------------------------------------------


def cmd_space_create(args) -> int:
    path = Path(args.file)
    doc = documents.load_document(path, "space-v1")
    documents.resolve_paths(doc, path.parent)
    ds = create_space(doc, SampleStore(args.store))
    print(ds.space_id)
    return EXIT_OK


def cmd_space_list(args) -> int:
    for sid in SampleStore(args.store).space_ids():
        print(sid)
    return EXIT_OK


def _optimizer_config(args) -> dict:
    cfg = {}
    if args.config:
        cfg = documents.load_document(args.config, "optimizer-v1")
    if args.optimizer:
        cfg["kind"] = args.optimizer
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.patience is not None:
        cfg["patience"] = args.patience
    if args.budget is not None:
        cfg["budget"] = args.budget
    if args.objective:
        obj = Objective.parse(args.objective)
        cfg["objective"] = {"property": obj.property, "direction": obj.direction}
    documents.validate(cfg, "optimizer-v1")
    return cfg


def cmd_op_run(args) -> int:
    cfg = _optimizer_config(args)
    store = SampleStore(args.store)
    ds = DiscoverySpace.open(store, args.space)
    objective = Objective(cfg["objective"]["property"], cfg["objective"].get("direction", "minimize"))
    optimizer = make_optimizer(cfg["kind"], **cfg.get("options", {}))
    result = run_optimization(
        ds, optimizer, objective,
        patience=cfg.get("patience", 5),
        seed=cfg.get("seed", 0),
        budget=cfg.get("budget"),
        operation_id=args.operation_id,
    )
    emit_json(result.to_document())
    return EXIT_OK


def cmd_op_log(args) -> int:
    ds = DiscoverySpace.open(SampleStore(args.store), args.space)
    sys.stdout.write(ds.operation_log_csv())
    return EXIT_OK


def _ground_truth(path: Path, ds: DiscoverySpace, prop: str) -> dict:
    from .actuators import TabularWorkload

    table = TabularWorkload.load(path, [prop])
    table.validate(ds.space)
    truth = {}
    for row in table.rows.values():
        if (row.get("status") or "ok").strip() != "ok":
            continue
        config = ds.space.configuration({d: row[d] for d in table.dimensions})
        truth[canonical_id(config)] = float(row[prop])
    return truth


def cmd_transfer_run(args) -> int:
    path = Path(args.file)
    job = documents.load_document(path, "transfer-v1")
    store = SampleStore(args.store)
    source = DiscoverySpace.open(store, job["source_space"])
    target = DiscoverySpace.open(store, job["target_space"])
    k_range = None
    if "k_range" in job:
        lo, hi = job["k_range"]
        k_range = range(lo, hi + 1)
    truth = None
    if job.get("ground_truth"):
        gt = Path(job["ground_truth"])
        truth = _ground_truth(gt if gt.is_absolute() else path.parent / gt, target, job["property"])
    report = run_rssc(
        source, target, job.get("mapping") or {}, job["property"], job.get("selection", "clustering"),
        direction=job.get("direction", "minimize"),
        k_range=k_range,
        n_points=job.get("n_points"),
        ground_truth=truth,
        pred_space_id=job.get("pred_space_id"),
        seed=job.get("seed", 0),
    )
    predictions = args.predictions or job.get("predictions_csv")
    if predictions and report.predictions:
        out = Path(predictions)
        out = out if out.is_absolute() or args.predictions else path.parent / out
        out.write_text(report.predictions_csv(target.space.names), encoding="utf-8", newline="")
    emit_json(report.to_document())
    return EXIT_OK if report.decision.transfer else EXIT_NO_TRANSFER


def cmd_store_query(args) -> int:
    ds = DiscoverySpace.open(SampleStore(args.store), args.space)
    samples = ds.read()
    if args.format == "csv":
        sys.stdout.write(samples_to_csv(samples, ds.space, ds.actions))
    else:
        for s in samples:
            emit_json(s.to_document())
    return EXIT_OK


def cmd_store_export(args) -> int:
    n = SampleStore(args.store).export_jsonl(args.output)
    log.info("exported %d entities to %s", n, args.output)
    return EXIT_OK


def cmd_store_import(args) -> int:
    n = SampleStore(args.store).import_jsonl(args.input)
    log.info("imported %d entities from %s", n, args.input)
    return EXIT_OK


def cmd_report_savings(args) -> int:
    store = SampleStore(args.store)
    runs = []
    for sid in args.spaces:
        ds = DiscoverySpace.open(store, sid)
        by_op: dict[str, list] = {}
        for entry in store.records(ds.space_id):
            by_op.setdefault(entry.operation_id, []).append(entry.entity_id)
        runs.extend(by_op.values())
    means = metrics.average_normalized_cost(runs, args.permutations, args.seed)
    sys.stdout.write(metrics.savings_csv(means))
    return EXIT_OK


def cmd_report_baseline(args) -> int:
    if args.max_draws > args.N:
        raise ConfigurationError(f"--max-draws {args.max_draws} exceeds --N {args.N}")
    sys.stdout.write(metrics.baseline_csv(args.N, args.K, args.max_draws))
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dspace", description="Discovery-space configuration search.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    top = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)

    space = top.add_parser("space", help="define discovery spaces")
    space_sub = space.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = space_sub.add_parser("create", help="persist a space definition")
    p.add_argument("-f", "--file", required=True)
    p.add_argument("--store", required=True)
    p.set_defaults(func=cmd_space_create)
    p = space_sub.add_parser("list", help="list spaces in a store")
    p.add_argument("--store", required=True)
    p.set_defaults(func=cmd_space_list)

    op = top.add_parser("op", help="run operations")
    op_sub = op.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = op_sub.add_parser("run", help="run an optimization")
    p.add_argument("--space", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--optimizer", choices=["random", "lhs", "anneal", "smbo"])
    p.add_argument("--seed", type=int)
    p.add_argument("--patience", type=int, help="0 disables the stop rule")
    p.add_argument("--budget", type=int)
    p.add_argument("--objective", help="PROP:min or PROP:max")
    p.add_argument("--operation-id")
    p.add_argument("-f", "--config", help="optimizer YAML")
    p.set_defaults(func=cmd_op_run)
    p = op_sub.add_parser("log", help="operation log CSV")
    p.add_argument("--space", required=True)
    p.add_argument("--store", required=True)
    p.set_defaults(func=cmd_op_log)

    tr = top.add_parser("transfer", help="knowledge transfer between spaces")
    tr_sub = tr.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = tr_sub.add_parser("run", help="run representative sub-space comparison")
    p.add_argument("-f", "--file", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--predictions", help="write predictions CSV here")
    p.set_defaults(func=cmd_transfer_run)

    st = top.add_parser("store", help="inspect the sample store")
    st_sub = st.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = st_sub.add_parser("query", help="dump the reconciled samples of a space")
    p.add_argument("--space", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--format", choices=["csv", "jsonl"], default="jsonl")
    p.set_defaults(func=cmd_store_query)
    p = st_sub.add_parser("export", help="export entities as JSON lines")
    p.add_argument("--store", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_store_export)
    p = st_sub.add_parser("import", help="import a JSON-lines export")
    p.add_argument("--store", required=True)
    p.add_argument("-i", "--input", required=True)
    p.set_defaults(func=cmd_store_import)

    rp = top.add_parser("report", help="evaluation reports")
    rp_sub = rp.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = rp_sub.add_parser("savings", help="average normalized cost per run index")
    p.add_argument("--store", required=True)
    p.add_argument("--spaces", nargs="+", required=True)
    p.add_argument("--permutations", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_report_savings)
    p = rp_sub.add_parser("baseline", help="random-walk success probability curve")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--max-draws", type=int, required=True)
    p.set_defaults(func=cmd_report_baseline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"dspace: schema violation: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (ConfigurationError, FileNotFoundError, yaml.YAMLError) as exc:
        print(f"dspace: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DSpaceError as exc:
        print(f"dspace: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
