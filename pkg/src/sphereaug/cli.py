"""Command-line interface.

    sphereaug gen       synthetic dataset -> train.csv [test.csv] ground_truth.json
    sphereaug transform carry features of one class to another -> transformed.csv
    sphereaug analyze   scatter / spectrum / degeneration report -> analysis.json
    sphereaug train     run the training loop -> metrics.csv model.json evaluation.json
    sphereaug report    merge evaluation / analysis / metrics files -> report.json report.csv

Options come from built-in defaults, then ``--config`` (a flat JSON object),
then command-line flags. The resolved options are written to
``<out>/config.json``; feeding that file back reproduces the run.

Exit status: 0 success, 2 usage or configuration error, 3 data or numerical
error.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import ConfigError, DegeneratePlane, SchemaMismatch, SphereAugError, UnknownClass, ZeroNorm
from .geometry import degenerated_sft, rotation_plan, translation_transform
from .stats import ANALYSIS_SCHEMA, ClassCenters, analyze
from .synthetic import SyntheticSpec, generate, make_longtail
from .training import EVALUATION_SCHEMA, METRICS_COLUMNS, TrainConfig, embedding_centers, evaluate, train

log = logging.getLogger("sphereaug")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

DEFAULTS = {
    "gen": {"dim": 3, "n_classes": 2, "template_eigenvalues": None, "samples_per_class": 100,
            "noise_mix": 0.0, "min_separation_deg": 30.0, "test_per_class": 0, "longtail": None,
            "seed": 0},
    "transform": {"input": None, "centers": None, "estimate": False, "kind": "sft", "pairs": None},
    "analyze": {"input": None, "centers": None},
    "train": {"train": None, "test": None, "seed": 0,
              **{k: v for k, v in TrainConfig().to_json().items() if k != "seed"}},
    "report": {"inputs": []},
}


def _csv_floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _pairs(value):
    if value is None or isinstance(value, list):
        return value
    out = []
    for item in str(value).split(","):
        src, _, dst = item.partition(":")
        try:
            out.append([int(src), int(dst)])
        except ValueError:
            raise ConfigError(f"bad class pair {item!r}, expected SRC:DST") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON file of options")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default: .)")

    p = argparse.ArgumentParser(prog="sphereaug", parents=[common],
                                description="Spherical feature transform toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    g.add_argument("--dim", type=int)
    g.add_argument("--classes", dest="n_classes", type=int)
    g.add_argument("--eigenvalues", dest="template_eigenvalues", type=_csv_floats,
                   help="comma-separated tangent variances (dim-1 values)")
    g.add_argument("--count", dest="samples_per_class", type=int, help="samples per class")
    g.add_argument("--noise-mix", dest="noise_mix", type=float)
    g.add_argument("--min-sep", dest="min_separation_deg", type=float, help="degrees")
    g.add_argument("--test-per-class", dest="test_per_class", type=int)
    g.add_argument("--longtail", type=lambda s: [int(v) for v in s.split(",")],
                   help="HEAD_COUNT,TAIL_COUNT,HEAD_CLASSES,TAIL_CLASSES")

    t = sub.add_parser("transform", parents=[common], help="transform features between classes")
    t.add_argument("--input")
    t.add_argument("--centers", help="centers JSON ({'centers': {label: [...]}})")
    t.add_argument("--estimate", action="store_true", default=None,
                   help="use per-class means of the input as centers")
    t.add_argument("--kind", choices=("sft", "sft_d", "translation"))
    t.add_argument("--pairs", help="SRC:DST[,SRC:DST...] (default: each class to the next)")

    a = sub.add_parser("analyze", parents=[common], help="scatter and spectrum diagnostics")
    a.add_argument("--input")
    a.add_argument("--centers")

    tr = sub.add_parser("train", parents=[common], help="train the embedding")
    tr.add_argument("--train")
    tr.add_argument("--test")
    tr.add_argument("--kind", choices=("none", "sft", "sft_d", "translation"))
    tr.add_argument("--mode", choices=("balanced", "unbalanced"))
    tr.add_argument("--lambda", dest="lambda", type=float)
    tr.add_argument("--tail-threshold", dest="tail_threshold", type=int)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--momentum", type=float)
    tr.add_argument("--weight-decay", dest="weight_decay", type=float)
    tr.add_argument("--margin", type=float)
    tr.add_argument("--iterations", type=int)
    tr.add_argument("--classes-per-batch", dest="classes_per_batch", type=int)
    tr.add_argument("--samples-per-class", dest="samples_per_class", type=int)
    tr.add_argument("--d-out", dest="d_out", type=int)
    tr.add_argument("--init", choices=("random", "identity"))

    r = sub.add_parser("report", parents=[common], help="merge run outputs")
    r.add_argument("inputs", nargs="*")
    return p


def resolve(command: str, args: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS[command])
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            doc = io.read_json(cfg_path)
        except (OSError, ValueError) as err:
            raise ConfigError(f"cannot read config {cfg_path}: {err}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        doc.pop("command", None)
        unknown = set(doc) - set(opts)
        if unknown:
            raise ConfigError(f"unknown {command} options in config: {sorted(unknown)}")
        opts.update(doc)
    skip = {"config", "out", "command", "verbose"}
    for key, value in vars(args).items():
        if key in skip or value is None or key not in opts:
            continue
        if key == "inputs" and not value:
            continue
        opts[key] = value
    return opts


def _out_dir(args) -> Path:
    out = Path(getattr(args, "out", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen(opts: dict, out: Path) -> dict:
    dim = int(opts["dim"])
    eig = opts["template_eigenvalues"] or [0.01] * (dim - 1)
    count = opts["samples_per_class"]
    n_classes = int(opts["n_classes"])
    spec = SyntheticSpec(
        dim=dim, n_classes=n_classes, template_eigenvalues=tuple(eig),
        samples_per_class=tuple(count) if isinstance(count, list) else (int(count),) * n_classes,
        noise_mix=float(opts["noise_mix"]), rng_seed=int(opts["seed"]),
        min_separation_deg=float(opts["min_separation_deg"]), test_per_class=int(opts["test_per_class"]))
    lt = opts["longtail"]
    if lt:
        if isinstance(lt, dict):
            lt = [lt["head_count"], lt["tail_count"], lt["head_classes"], lt["tail_classes"]]
        if len(lt) != 4:
            raise ConfigError("longtail needs HEAD_COUNT,TAIL_COUNT,HEAD_CLASSES,TAIL_CLASSES")
        spec = make_longtail(spec, *[int(v) for v in lt])
    ds = generate(spec)
    io.write_features(out / "train.csv", ds.features, ds.labels)
    if ds.test_features is not None:
        io.write_features(out / "test.csv", ds.test_features, ds.test_labels)
    io.write_json(out / "ground_truth.json", ds.ground_truth_json())
    return {"rows": int(ds.labels.size), "classes": spec.n_classes}


def _load_centers(opts, X, y) -> ClassCenters:
    if opts.get("centers"):
        try:
            return ClassCenters.from_json(io.read_json(opts["centers"]))
        except (KeyError, TypeError, ValueError, StopIteration) as err:
            raise SchemaMismatch(f"bad centers file {opts['centers']}: {err}") from None
    return ClassCenters.from_means(X, y)


def cmd_transform(opts: dict, out: Path) -> dict:
    if not opts["input"]:
        raise ConfigError("transform needs --input")
    if not opts["centers"] and not opts["estimate"]:
        raise ConfigError("transform needs --centers or --estimate")
    kind = opts["kind"]
    if kind not in ("sft", "sft_d", "translation"):
        raise ConfigError(f"unknown transform kind {kind!r}")
    X, y, _ = io.read_features(opts["input"])
    centers = _load_centers(opts, X, y)
    present = sorted(int(k) for k in np.unique(y))
    pairs = _pairs(opts["pairs"])
    if pairs is None:
        pairs = [[k, present[(i + 1) % len(present)]] for i, k in enumerate(present)]
    for src, dst in pairs:
        for k in (src, dst):
            if k not in centers or (k == src and k not in present):
                raise UnknownClass(f"class {k} not present")
    rows, labels, srcs, skipped = [], [], [], 0
    for src, dst in pairs:
        Xs = X[y == src]
        mu_s, mu_d = centers[src], centers[dst]
        if kind == "sft":
            try:
                moved = rotation_plan(mu_s, mu_d).apply(Xs)
            except DegeneratePlane as err:
                log.warning("pair %d->%d skipped: %s", src, dst, err)
                skipped += Xs.shape[0]
                continue
        elif kind == "translation":
            moved = translation_transform(Xs, mu_s, mu_d)
        else:
            moved = []
            for x in Xs:
                try:
                    moved.append(degenerated_sft(x, mu_s, mu_d))
                except ZeroNorm:
                    skipped += 1
            moved = np.array(moved).reshape(-1, X.shape[1])
        rows.append(moved)
        labels += [dst] * moved.shape[0]
        srcs += [src] * moved.shape[0]
    Xo = np.concatenate(rows) if rows else np.zeros((0, X.shape[1]))
    io.write_features(out / "transformed.csv", Xo, labels, srcs, [kind] * len(labels))
    dev = np.abs(np.linalg.norm(Xo, axis=1) - 1.0) if Xo.shape[0] else np.zeros(0)
    summary = {"kind": kind, "pairs": pairs, "rows": int(Xo.shape[0]), "skipped": skipped,
               "max_norm_deviation": float(dev.max()) if dev.size else 0.0}
    io.write_json(out / "transform_summary.json", summary)
    return summary


def cmd_analyze(opts: dict, out: Path) -> dict:
    if not opts["input"]:
        raise ConfigError("analyze needs --input")
    X, y, _ = io.read_features(opts["input"])
    centers = _load_centers(opts, X, y) if opts.get("centers") else None
    doc = analyze(X, y, centers).to_json()
    doc["input"] = str(opts["input"])
    io.write_json(out / "analysis.json", doc)
    return {"classes": len(doc["per_class_divergence"])}


def _train_config(opts: dict) -> TrainConfig:
    doc = {k: v for k, v in opts.items() if k not in ("train", "test")}
    return TrainConfig.from_json(doc)


def cmd_train(opts: dict, out: Path) -> dict:
    if not opts["train"]:
        raise ConfigError("train needs --train")
    cfg = _train_config(opts)
    U, y, _ = io.read_features(opts["train"])
    with io.MetricsWriter(out / "metrics.csv", METRICS_COLUMNS) as mw:
        state, _ = train(cfg, U, y, callback=mw.write)
    io.write_json(out / "model.json", state.model.to_json())
    if opts["test"]:
        Ut, yt, _ = io.read_features(opts["test"])
    else:
        Ut, yt = U, y
    centers = embedding_centers(state.model, U, y)
    ev = evaluate(state.model, Ut, yt, centers, state.class_counts, cfg.tail_threshold)
    ev.update({"kind": cfg.kind, "lambda": cfg.lam, "mode": cfg.mode, "seed": cfg.seed,
               "iterations": cfg.iterations})
    io.write_json(out / "evaluation.json", ev)
    return {"recall_at_1": ev["recall_at_1"], "head_acc": ev.get("head_acc"), "tail_acc": ev.get("tail_acc")}


REPORT_FIELDS = ("name", "source", "schema", "kind", "mode", "lambda", "seed", "recall_at_1",
                 "accuracy", "head_acc", "tail_acc", "divergence_std", "iterations", "final_combined_loss")


def _report_row(path: Path) -> dict:
    row = dict.fromkeys(REPORT_FIELDS)
    row["name"] = path.parent.name or path.stem
    row["source"] = str(path)
    if path.suffix == ".csv":
        try:
            metrics = io.read_metrics(path)
        except (OSError, csv.Error) as err:
            raise SchemaMismatch(f"{path}: {err}") from None
        if not metrics or set(METRICS_COLUMNS) - set(metrics[0]):
            raise SchemaMismatch(f"{path}: not a metrics file")
        row["schema"] = "sphereaug.metrics/1"
        row["iterations"] = int(metrics[-1]["iter"])
        row["final_combined_loss"] = float(metrics[-1]["combined"])
        return row
    try:
        doc = io.read_json(path)
    except ValueError as err:
        raise SchemaMismatch(f"{path}: {err}") from None
    schema = doc.get("schema") if isinstance(doc, dict) else None
    if schema not in (EVALUATION_SCHEMA, ANALYSIS_SCHEMA):
        raise SchemaMismatch(f"{path}: unrecognised schema {schema!r}")
    row["schema"] = schema
    for key in REPORT_FIELDS[3:]:
        if key in doc:
            row[key] = doc[key]
    return row


def cmd_report(opts: dict, out: Path) -> dict:
    inputs = opts["inputs"]
    if not inputs:
        raise ConfigError("report needs at least one input file")
    rows = [_report_row(Path(p)) for p in inputs]
    groups: dict[str, list[dict]] = {}
    for row in rows:
        if row["schema"] == EVALUATION_SCHEMA:
            groups.setdefault(row["kind"] or "unknown", []).append(row)
    comparison = []
    for kind, members in sorted(groups.items()):
        entry = {"kind": kind, "runs": len(members)}
        for key in ("recall_at_1", "accuracy", "head_acc", "tail_acc", "divergence_std"):
            vals = [m[key] for m in members if m[key] is not None]
            entry[key] = float(np.mean(vals)) if vals else None
        comparison.append(entry)
    io.write_json(out / "report.json", {"schema": "sphereaug.report/1", "runs": rows,
                                        "comparison": comparison})
    buf = _io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: ("" if v is None else io.fmt(v) if isinstance(v, float) else v) for k, v in row.items()})
    (out / "report.csv").write_text(buf.getvalue())
    return {"runs": len(rows)}


COMMANDS = {"gen": cmd_gen, "transform": cmd_transform, "analyze": cmd_analyze,
            "train": cmd_train, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        opts = resolve(args.command, args)
        out = _out_dir(args)
        result = COMMANDS[args.command](opts, out)
        io.write_json(out / "config.json", {"command": args.command, **opts})
    except ConfigError as err:
        print(f"sphereaug {args.command}: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"sphereaug {args.command}: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except SphereAugError as err:
        print(f"sphereaug {args.command}: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_DATA
    log.info("%s done: %s", args.command, result)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
