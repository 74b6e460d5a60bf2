"""Command-line entry point: ``partiallab {generate,train,evaluate,compare,gradcheck}``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""
import argparse
import csv
import hashlib
import json
import os
import sys

from . import __version__
from . import config as config_mod
from . import experiment, gradcheck
from .data import PROTOCOLS, apply_protocol, gen_synthetic, load_dataset, save_dataset
from .errors import ConfigError
from .trainer import Model, evaluate

EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _meta(doc):
    blob = json.dumps(doc, sort_keys=True).encode("utf-8")
    return {"tool": "partiallab", "version": __version__,
            "config_hash": hashlib.sha256(blob).hexdigest()}


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _write_csv(path, header, rows, meta):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else v for v in row])
    _write_json(path + ".meta.json", meta)


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def cmd_generate(args):
    params = {"n": args.n, "c": args.c, "d": args.d, "correlation": args.correlation,
              "feature_noise": args.feature_noise, "bias_range": list(args.bias_range),
              "min_positives": args.min_positives, "protocol": args.protocol, "p": args.p,
              "seed": args.seed}
    ds = gen_synthetic(args.n, args.c, args.d, args.correlation, args.seed,
                       feature_noise=args.feature_noise, bias_range=tuple(args.bias_range),
                       min_positives=args.min_positives)
    ds = apply_protocol(ds, args.protocol, args.p, args.seed)
    save_dataset(ds, args.out)
    _write_json(args.out + ".meta.json", {**_meta(params), "params": params})
    print(f"wrote {args.out}: {ds.n} examples, {ds.budget().clean_count} clean labels")
    return 0


def cmd_train(args):
    cfg = config_mod.resolve(_read_json(args.config))
    if args.dry_run:
        sys.stdout.write(config_mod.canonical_json(cfg))
        return 0
    report = experiment.run(cfg)
    os.makedirs(args.out, exist_ok=True)
    meta = {"tool": "partiallab", "version": __version__, "config_hash": config_mod.config_hash(cfg)}
    _write_json(os.path.join(args.out, "report.json"),
                {"meta": meta, "config": cfg, **report.to_dict()})
    _write_json(os.path.join(args.out, "model.json"), {"meta": meta, **report.model.to_dict()})
    rows = [[getattr(r, c) for c in ("round", "strategy", "theta", "n_selected",
                                     "label_prop_after", "tp_rate", "tn_rate")]
            for r in report.audit]
    _write_csv(os.path.join(args.out, "audit.csv"),
               ["round", "strategy", "theta", "n_selected", "label_prop_after", "tp_rate",
                "tn_rate"], rows, meta)
    m = report.metrics
    print(f"MAP {m.map:.4f}" if m is not None else "trained (no test split)")
    return 0


def cmd_evaluate(args):
    model = Model.from_dict(_read_json(args.model))
    ds = load_dataset(args.data)
    report = evaluate(model, ds).to_dict()
    doc = {"meta": _meta({"model": args.model, "data": args.data}), "metrics": report}
    if args.out:
        _write_json(args.out, doc)
    else:
        sys.stdout.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return 0


def _split_list(text, cast):
    return [cast(v) for v in text.split(",") if v.strip()]


def cmd_compare(args):
    sweep = _read_json(args.sweep) if args.sweep else {}
    unknown = set(sweep) - {"base", "protocols", "proportions", "seeds"}
    if unknown:
        raise ConfigError(f"/{sorted(unknown)[0]}: unknown key")
    base = sweep.get("base", {})
    if args.config:
        base = _read_json(args.config)
    protocols = _split_list(args.protocols, str) if args.protocols else sweep.get(
        "protocols", ["partial", "dense"])
    proportions = _split_list(args.proportions, float) if args.proportions else sweep.get(
        "proportions", [round(0.1 * k, 1) for k in range(1, 11)])
    seeds = _split_list(args.seeds, int) if args.seeds else sweep.get("seeds", [0, 1, 2])
    for i, p in enumerate(protocols):
        if p not in PROTOCOLS:
            raise ConfigError(f"/protocols/{i}: unknown protocol {p!r}")
    for i, q in enumerate(proportions):
        if not 0.0 < q <= 1.0:
            raise ConfigError(f"/proportions/{i}: must be in (0, 1]")
    config_mod.resolve(base)
    rows = experiment.compare(base, protocols, proportions, seeds, workers=args.workers)
    full = {"base": base, "protocols": protocols, "proportions": proportions, "seeds": seeds}
    _write_csv(args.out, experiment.COMPARE_HEADER, rows, {**_meta(full), "sweep": full})
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_gradcheck(args):
    results = gradcheck.run_all(n_instances=args.instances, seed=args.seed)
    print(gradcheck.format_report(results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"gradient check failed for: {', '.join(failed)}", file=sys.stderr)
        return EXIT_RUNTIME
    print("all gradient checks passed")
    return 0


def build_parser():
    parser = _Parser(prog="partiallab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"partiallab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic dataset in the text format")
    g.add_argument("--n", type=int, default=2000)
    g.add_argument("--c", type=int, default=8)
    g.add_argument("--d", type=int, default=16)
    g.add_argument("--correlation", type=float, default=0.5)
    g.add_argument("--feature-noise", type=float, default=0.5)
    g.add_argument("--bias-range", type=float, nargs=2, default=(-1.2, -0.3), metavar=("LO", "HI"))
    g.add_argument("--min-positives", type=int, default=0)
    g.add_argument("--protocol", choices=PROTOCOLS, default="full")
    g.add_argument("--p", type=float, default=1.0, help="label proportion / clean fraction")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train from a JSON experiment config")
    t.add_argument("config")
    t.add_argument("--out", default="run")
    t.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a saved model on a dataset file")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("compare", help="annotation-budget sweep to CSV")
    c.add_argument("--sweep", help="sweep JSON with base, protocols, proportions, seeds")
    c.add_argument("--config", help="base experiment config (overrides the sweep's base)")
    c.add_argument("--protocols")
    c.add_argument("--proportions")
    c.add_argument("--seeds")
    c.add_argument("--workers", type=int, default=None)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)

    k = sub.add_parser("gradcheck", help="finite-difference check of all backward passes")
    k.add_argument("--instances", type=int, default=50)
    k.add_argument("--seed", type=int, default=0)
    k.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"partiallab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"partiallab: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"partiallab: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
