"""``homemoe`` command line: gen-data, train, eval, diagnose, grad-check, sweep."""

import argparse
import json
import logging
import math
import os
import sys

import numpy as np
import yaml

from . import checkpoint, diagnostics, gradcheck, kernels
from . import tensor as T
from .config import load_dataset_spec, load_document, load_run_config
from .data import DataError, generate_dataset, read_dataset, split_dataset, write_dataset
from .diagnostics import Thresholds
from .layers import ConfigError
from .models import build_model
from .train import evaluate, train

log = logging.getLogger("homemoe")

METRICS_SCHEMA = "homemoe.metrics"


def _clean(x):
    if isinstance(x, float) and math.isnan(x):
        return None
    return x


def metrics_document(report, n_rows):
    tasks = {t: {k: _clean(v) for k, v in m.items()} for t, m in report.items()}
    return {"schema": METRICS_SCHEMA, "version": 1, "n_rows": n_rows, "tasks": tasks}


def _dump_json(doc, path=None):
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _read_data(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"data file not found: {path}")
    return read_dataset(path)


def _tasks_for(cfg, ds):
    by_name = {t.name: t for t in cfg.tasks}
    missing = [n for n in ds.task_names if n not in by_name]
    if missing:
        raise ConfigError(f"tasks {missing} in the data file have no entry in the config's data.tasks")
    return [by_name[n] for n in ds.task_names]


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_gen_data(args):
    spec = load_dataset_spec(args.spec, args.set)
    ds = generate_dataset(spec)
    write_dataset(ds, args.out)
    print(f"wrote {len(ds)} rows, {ds.features.shape[1]} features, {len(ds.task_names)} tasks to {args.out}")
    targets = {t.name: t.positive_rate for t in spec.tasks}
    for name, rate in ds.positive_rates().items():
        print(f"  {name:<12} positive rate {rate:.5f}  (target {targets[name]:.5f})")
    return 0


def cmd_train(args):
    cfg, text = load_run_config(args.config, args.set)
    out = args.out or cfg.out_dir
    ds = _read_data(args.data)
    tasks = _tasks_for(cfg, ds)
    os.makedirs(out, exist_ok=True)
    if text is not None:
        with open(os.path.join(out, "config.input.yaml"), "w") as fh:
            fh.write(text)
    with open(os.path.join(out, "config.yaml"), "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)

    train_ds, eval_ds = split_dataset(ds, cfg.train.eval_fraction, seed=cfg.train.seed)
    model = build_model(cfg.model, tasks)
    log.info("training %s (%d parameters) on %d rows", cfg.model.architecture, model.parameter_count(), len(train_ds))
    model, history = train(model, train_ds, cfg.train, eval_data=eval_ds)
    checkpoint.save(model, os.path.join(out, "checkpoint.json"))
    history.write(os.path.join(out, "history.csv"))
    report = evaluate(model, eval_ds)
    _dump_json(metrics_document(report, len(eval_ds)), os.path.join(out, "metrics.json"))
    print(f"{cfg.model.architecture}: {model.parameter_count()} parameters, {len(history.step_losses)} steps")
    _print_metrics(report)
    print(f"run directory: {out}")
    return 0


def _print_metrics(report):
    print(f"  {'task':<12} {'auc':>8} {'gauc':>8}")
    for t, m in report.items():
        print(f"  {t:<12} {m['auc']:>8.4f} {m['gauc']:>8.4f}")


def cmd_eval(args):
    model = checkpoint.load(args.checkpoint)
    ds = _read_data(args.data)
    if ds.task_names != [t.name for t in model.tasks]:
        raise DataError(f"data tasks {ds.task_names} do not match checkpoint tasks")
    report = evaluate(model, ds)
    doc = metrics_document(report, len(ds))
    if args.out:
        _dump_json(doc, args.out)
        _print_metrics(report)
    else:
        _dump_json(doc)
    return 0


def cmd_diagnose(args):
    model = checkpoint.load(args.checkpoint)
    ds = _read_data(args.data)
    thresholds = Thresholds()
    if args.config:
        _, doc = load_document(args.config)
        thresholds = Thresholds.from_dict(doc.get("thresholds", {}))
    batches = (ds.features[lo:lo + args.batch_size] for lo in range(0, len(ds), args.batch_size))
    report = diagnostics.collect_gate_report(model, batches)
    flags = diagnostics.detect_pathologies(report, thresholds)
    os.makedirs(args.out, exist_ok=True)
    diagnostics.write_report(report, os.path.join(args.out, "gate_report.json"))
    diagnostics.write_flags(flags, os.path.join(args.out, "flags.json"), thresholds)
    diagnostics.write_heatmap(report, os.path.join(args.out, "gate_weights.csv"))
    diagnostics.write_heatmap(report, os.path.join(args.out, "weight_share.csv"), matrix="weight_share")
    print(f"{'expert':<22} {'mean':>9} {'std':>9} {'zero':>6}")
    for e in report.experts:
        s = report.expert_stats[e]
        print(f"{e:<22} {s['mean']:>9.4f} {s['std']:>9.4f} {s['zero_fraction']:>6.3f}")
    print(f"collapse: {len(flags.collapse)}  degradation: {len(flags.degradation)}  "
          f"underfitting: {len(flags.underfitting)}")
    return 0


def cmd_grad_check(args):
    if args.config:
        cfg, _ = load_run_config(args.config, args.set)
        rng = np.random.default_rng(cfg.model.seed)
        model = build_model(cfg.model, cfg.tasks)
        gradcheck.randomize(model, rng)
        x = rng.normal(size=(args.batch, cfg.model.input_width))
        y = (rng.random((args.batch, len(cfg.tasks))) < 0.5).astype(np.float64)
        run = lambda: gradcheck.grad_check(model, x, y, h=args.h, tol=args.tol)  # noqa: E731
    else:
        run = lambda: gradcheck.run_tiny_home(batch=args.batch, h=args.h, tol=args.tol)  # noqa: E731
    if args.corrupt:
        with T.corrupt_backward(args.corrupt, 1.5):
            results = run()
    else:
        results = run()
    print(gradcheck.format_table(results))
    failed = [r.block for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} blocks pass (rel. err < {args.tol:g})")
    return 1 if failed else 0


def cmd_sweep(args):
    values = [yaml.safe_load(v) for v in args.values.split(",")]
    ds = _read_data(args.data)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for value in values:
        cfg, _ = load_run_config(args.config, [*(args.set or []), f"model.{args.param}={value}"])
        train_ds, eval_ds = split_dataset(ds, cfg.train.eval_fraction, seed=cfg.train.seed)
        model = build_model(cfg.model, _tasks_for(cfg, ds))
        model, _ = train(model, train_ds, cfg.train)
        report = evaluate(model, eval_ds)
        row = {"value": value, "parameters": model.parameter_count()}
        for t, m in report.items():
            row[f"{t}.auc"] = m["auc"]
            row[f"{t}.gauc"] = m["gauc"]
        rows.append(row)
        print(f"{args.param}={value}: {row['parameters']} parameters, mean gauc "
              f"{np.nanmean([m['gauc'] for m in report.values()]):.4f}")
    path = os.path.join(args.out, f"sweep_{args.param}.csv")
    with open(path, "w") as fh:
        cols = list(rows[0])
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols) + "\n")
    print(f"wrote {path}")
    return 0


# --------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="homemoe", description="HoME / MMoE / CGC multi-task MoE toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def overrides(sp):
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config entry, e.g. model.architecture=mmoe (repeatable)")

    g = sub.add_parser("gen-data", help="generate a synthetic multi-task dataset")
    g.add_argument("--spec", required=True, help="dataset spec or run config (YAML/JSON)")
    g.add_argument("--out", required=True, help="output CSV path")
    overrides(g)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model; writes a run directory")
    t.add_argument("--config", help="run config (YAML/JSON); defaults apply when omitted")
    t.add_argument("--data", required=True)
    t.add_argument("--out", help="run directory (default: out_dir from the config)")
    overrides(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="per-task AUC/GAUC of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", help="metrics JSON path (default: stdout)")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("diagnose", help="gate report and pathology flags")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--data", required=True)
    d.add_argument("--out", required=True, help="output directory")
    d.add_argument("--config", help="run config whose thresholds section overrides the defaults")
    d.add_argument("--batch-size", type=int, default=4096)
    d.set_defaults(func=cmd_diagnose)

    c = sub.add_parser("grad-check", help="finite-difference check of every parameter block")
    c.add_argument("--config", help="check this config's model instead of the tiny HoME")
    c.add_argument("--batch", type=int, default=8)
    c.add_argument("--h", type=float, default=1e-5)
    c.add_argument("--tol", type=float, default=1e-4)
    c.add_argument("--corrupt", metavar="OP", help=argparse.SUPPRESS)
    overrides(c)
    c.set_defaults(func=cmd_grad_check)

    s = sub.add_parser("sweep", help="train/eval over values of one model setting")
    s.add_argument("--config")
    s.add_argument("--data", required=True)
    s.add_argument("--param", required=True, choices=["experts_per_group", "lora_count", "n_shared_experts"])
    s.add_argument("--values", required=True, help="comma separated, e.g. 1,2,3,4")
    s.add_argument("--out", required=True)
    overrides(s)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log.info("kernel backend: %s", kernels.backend())
    try:
        return args.func(args)
    # every domain error (config, data, metric, shape, checkpoint) is a ValueError
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
