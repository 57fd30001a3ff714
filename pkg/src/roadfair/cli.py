"""Command line entry point: ``python -m roadfair <verb> ...``.

Verbs: train, sweep, eval, drift, subgroups, plotdata. Every verb that reads
data accepts either a CSV path or ``synthetic:key=value,...`` which draws from
the planted-bias generator preset (keys are SyntheticConfig fields, plus
``drifted=1`` for the shifted sample).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings

from . import harness
from .data import (Dataset, SubgroupSpec, SyntheticConfig, load_csv, local_bias_config, split, standardize,
                   synthesize)
from .errors import RoadFairError
from .metrics import RunReport
from .nn import make_rng
from .trainers import TrainConfig, load_model, save_model, train

log = logging.getLogger("roadfair")


def _number(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def _floats(text: str):
    return tuple(float(v) for v in text.split(",") if v.strip())


def read_data(source: str, label: str, sensitive: str) -> Dataset:
    if not source.startswith("synthetic"):
        return load_csv(source, label, sensitive)
    _, _, opts = source.partition(":")
    kw = {}
    for item in filter(None, opts.split(",")):
        key, _, value = item.partition("=")
        kw[key.strip()] = _number(value.strip())
    drifted = bool(kw.pop("drifted", 0))
    unknown = set(kw) - set(SyntheticConfig.__dataclass_fields__)
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown synthetic option(s): {sorted(unknown)}")
    return synthesize(local_bias_config(**kw), drifted=drifted)


def subgroup_spec(args) -> SubgroupSpec:
    cross = tuple(c for c in (args.cross_col or "").split(",") if c)
    return SubgroupSpec(args.bin_col, args.bin_width, cross, args.min_size)


def train_config(args) -> TrainConfig:
    return TrainConfig(
        algorithm=args.algo, lambda_g=args.lambda_g, tau=args.tau, fairness_mode=args.mode,
        normalization=args.norm, epochs=args.epochs, batch_size=args.batch, seed=args.seed,
        lr_f=args.lr_f, lr_g=args.lr_g, lr_r=args.lr_r,
    )


def _prepared_split(args):
    ds = read_data(args.data, args.label, args.sensitive)
    tr, te = split(ds, args.test_fraction, make_rng(args.seed))
    tr, st = standardize(tr)
    return tr, st.apply(te), st


def _emit(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_train(args) -> int:
    tr, te, st = _prepared_split(args)
    model = train(tr, train_config(args))
    model.standardizer = st
    save_model(model, args.out)
    report = harness.evaluate(model, te, subgroup_spec(args))
    print(json.dumps({"model": args.out, **report.to_flat()}, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    tr, te, st = _prepared_split(args)
    spec = harness.SweepSpec(
        lambdas=_floats(args.lambdas) if args.lambdas else harness.DEFAULT_LAMBDAS,
        taus=_floats(args.taus) if args.taus else harness.DEFAULT_TAUS,
        algorithms=tuple(args.algo.split(",")),
        seeds=tuple(range(args.seed, args.seed + args.n_seeds)),
        base=train_config(replace_algo(args)),
    )
    print(f"sweep: {spec.size()} runs ({len(spec.cells())} cells x {len(spec.seeds)} seeds)", file=sys.stderr)
    pre = {"source": args.data, "test_fraction": args.test_fraction, "standardized_columns": list(st.columns)}
    records = harness.run_sweep(spec, tr, te, subgroup_spec(args), args.out, args.workers, pre)
    failed = [r for r in records if not r.ok]
    for r in failed:
        print(f"failed: {r.run_id}: {r.error}", file=sys.stderr)
    all_records = harness.load_records(args.out)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        front = harness.pareto_report(all_records, args.di_budget)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(json.dumps({"runs": len(records), "failed": len(failed), "pareto": front}, sort_keys=True))
    return 1 if failed else 0


def replace_algo(args):
    # the base config of a sweep is algorithm independent
    ns = argparse.Namespace(**vars(args))
    ns.algo = "biased"
    return ns


def cmd_eval(args) -> int:
    model = load_model(args.model)
    ds = read_data(args.data, args.label, args.sensitive)
    _emit(harness.evaluate(model, ds, subgroup_spec(args)).to_flat(), args.out)
    return 0


def cmd_drift(args) -> int:
    model = load_model(args.model)
    sets = {}
    for item in args.data:
        name, sep, source = item.partition("=")
        if not sep:
            name, source = item, item
        sets[name] = read_data(source, args.label, args.sensitive)
    reports = harness.drift_eval(model, sets, subgroup_spec(args))
    _emit({name: {"global_di": r.global_di, "eo_gap": r.eo_gap, "worst_1_di": r.worst_1_di,
                  "worst_3_di": r.worst_3_di, "accuracy": r.accuracy} for name, r in reports.items()}, args.out)
    return 0


def cmd_subgroups(args) -> int:
    model = load_model(args.model)
    ds = read_data(args.data, args.label, args.sensitive)
    cross = args.cross_col or "gender"
    variants = [None] + [{cross: v} for v in (0, 1)]
    rows = harness.subgroup_sensitivity(model, ds, _floats(args.widths), variants, args.bin_col, args.min_size)
    _emit(rows, args.out)
    return 0


def cmd_plotdata(args) -> int:
    if args.kind in ("local_di_bars", "r_histogram"):
        with open(args.report, encoding="utf-8") as fh:
            source = RunReport.from_flat(json.load(fh))
    else:
        source = harness.load_records(args.records)
        if args.kind == "pareto_xy":
            source = harness.pareto_report(source, args.di_budget)
    n = harness.emit_plotdata(source, args.kind, args.out)
    print(f"{args.kind}: {n} rows -> {args.out}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roadfair", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    verbs = parser.add_subparsers(dest="verb", required=True)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--label", default="label")
    data.add_argument("--sensitive", default="sensitive")

    groups = argparse.ArgumentParser(add_help=False)
    groups.add_argument("--bin-col", default="age")
    groups.add_argument("--bin-width", type=float, default=10.0)
    groups.add_argument("--cross-col", default="gender", help="comma separated; empty string for none")
    groups.add_argument("--min-size", type=int, default=50)

    fit = argparse.ArgumentParser(add_help=False)
    fit.add_argument("--data", required=True)
    fit.add_argument("--mode", choices=("dp", "eo"), default="dp")
    fit.add_argument("--lambda", dest="lambda_g", type=float, default=3.0)
    fit.add_argument("--tau", type=float, default=0.5)
    fit.add_argument("--norm", choices=("conditional", "global"), default="conditional")
    fit.add_argument("--epochs", type=int, default=100)
    fit.add_argument("--batch", type=int, default=128)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--lr-f", type=float, default=0.05)
    fit.add_argument("--lr-g", type=float, default=0.5)
    fit.add_argument("--lr-r", type=float, default=0.05)
    fit.add_argument("--test-fraction", type=float, default=0.3)

    p = verbs.add_parser("train", parents=[data, groups, fit], help="train one model and report on the test split")
    p.add_argument("--algo", choices=("biased", "globalfair", "road", "broad"), default="road")
    p.add_argument("--out", required=True, help="model file")
    p.set_defaults(run=cmd_train)

    p = verbs.add_parser("sweep", parents=[data, groups, fit], help="lambda x tau grid, appended to a JSONL file")
    p.add_argument("--algo", default="globalfair,road", help="comma separated algorithms")
    p.add_argument("--lambdas", help="comma separated; default 20 values on [0, 5]")
    p.add_argument("--taus", help="comma separated; default 10 values on [0.001, 1]")
    p.add_argument("--n-seeds", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--di-budget", type=float, default=0.05)
    p.add_argument("--out", required=True, help="JSONL results file (resumed if present)")
    p.set_defaults(run=cmd_sweep)

    p = verbs.add_parser("eval", parents=[data, groups], help="report for a saved model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(run=cmd_eval)

    p = verbs.add_parser("drift", parents=[data, groups], help="compare DI and EO across named test sets")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, action="append", help="NAME=SOURCE, repeatable")
    p.add_argument("--out")
    p.set_defaults(run=cmd_drift)

    p = verbs.add_parser("subgroups", parents=[data, groups], help="worst-1-DI over 12 subgroup definitions")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--widths", default="5,10,15,20")
    p.add_argument("--out")
    p.set_defaults(run=cmd_subgroups)

    p = verbs.add_parser("plotdata", help="CSV series for plotting")
    p.add_argument("--kind", required=True, choices=sorted(harness.PLOT_COLUMNS))
    p.add_argument("--records", help="sweep JSONL (pareto_xy, tau_curve)")
    p.add_argument("--report", help="report JSON from eval (local_di_bars, r_histogram)")
    p.add_argument("--di-budget", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(run=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.verb == "plotdata":
        need = "report" if args.kind in ("local_di_bars", "r_histogram") else "records"
        if getattr(args, need) is None:
            parser.error(f"--kind {args.kind} needs --{need}")
    try:
        return args.run(args)
    except (RoadFairError, OSError, argparse.ArgumentTypeError) as exc:
        print(f"roadfair {args.verb}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
