"""Command-line surface: dataset generation, training, prediction, metrics,
scoring and benchmark reports.

Every command accepts --seed and --config (an INI file whose sections mirror
the subcommand names; unknown sections or keys are rejected).  Commands that
produce files write them under a run directory together with the resolved
configuration, and rerunning with identical arguments and seed reproduces
every artifact byte for byte.  Exit codes: 0 success, 2 usage error, 1
runtime failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
import time

import numpy as np

from . import __version__, evaluation, regressor, sr
from .benchmark import benchmark_dataset, benchmark_sr, list_images
from .errors import EoqaError
from .evaluation import MetricConvention, ScoreConvention
from .image import load_image
from .modifiers import DEFAULT_GRIDS, DatasetManifest, ModifierKind, ParamGrid, \
    generate_annotated_dataset

THREADS_ENV = "EOQA_THREADS"


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _run_dir(args) -> str:
    """Resolve the output directory, minting a timestamped name if absent."""
    out = args.out
    if not out:
        stamp = time.strftime("%Y%m%d_%H%M%S")
        out = f"run_{stamp}_seed{args.seed}"
    os.makedirs(out, exist_ok=True)
    return out


def _write_run_config(out_dir: str, command: str, args,
                      skip: tuple[str, ...] = ("func", "command", "config")) -> None:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.add_section(command)
    for key in sorted(vars(args)):
        if key in skip:
            continue
        value = getattr(args, key)
        if value is None:
            continue
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        cp.set(command, key.replace("_", "-"), str(value))
    with open(os.path.join(out_dir, "run_config.ini"), "w", encoding="utf-8") as fh:
        cp.write(fh)


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_sources(input_dir: str) -> list[tuple[str, "object"]]:
    names = list_images(input_dir)
    return [(os.path.splitext(n)[0], load_image(os.path.join(input_dir, n)))
            for n in names]


def _load_model_table(paths: list[str]) -> dict[str, regressor.TrainedModel]:
    table: dict[str, regressor.TrainedModel] = {}
    for path in paths:
        model = regressor.load_model(path)
        for name in model.net.head_names():
            table[name] = model
    return table


def cmd_modify(args) -> int:
    out = _run_dir(args)
    kind = ModifierKind(args.modifier)
    base = DEFAULT_GRIDS[kind]
    grid = ParamGrid(kind,
                     args.n if args.n is not None else base.n,
                     args.lo if args.lo is not None else base.lo,
                     args.hi if args.hi is not None else base.hi)
    sources = _load_sources(args.input)
    manifest_path = os.path.join(out, "manifest.jsonl")
    old = None
    if os.path.exists(manifest_path):
        with open(manifest_path, "r", encoding="utf-8") as fh:
            old = fh.read()
    man = generate_annotated_dataset(sources, kind, grid, args.side, args.crops,
                                     args.seed, out, threads=args.threads)
    _write_run_config(out, "modify", args)
    with open(manifest_path, "r", encoding="utf-8") as fh:
        new = fh.read()
    if old is not None and old == new:
        print("reproduced")
    print(f"wrote {len(man.entries)} crops for {len(sources)} sources "
          f"({kind.value}, {grid.n} values) under {out}")
    return 0


def _write_train_log(path: str, log: list[dict]) -> None:
    if not log:
        return
    keys = list(log[0].keys())
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for row in log:
            w.writerow([row[k] for k in keys])


def cmd_train(args) -> int:
    out = _run_dir(args)
    manifests = {}
    roots = {}
    for path in args.manifest:
        man = DatasetManifest.load(path)
        name = man.kind.value
        if name in manifests:
            print(f"error: duplicate manifest for parameter {name!r}", file=sys.stderr)
            return 2
        manifests[name] = man
        roots[name] = os.path.dirname(os.path.abspath(path))
    topology = args.topology or ("single" if len(manifests) == 1 else "multihead")
    if topology == "single" and len(manifests) != 1:
        print("error: single topology needs exactly one manifest", file=sys.stderr)
        return 2
    cfg = regressor.RegressorConfig(
        side=args.side, crops=args.crops, epochs=args.epochs,
        batch_size=args.batch_size, lr=args.lr, weight_decay=args.weight_decay,
        momentum=args.momentum, soft_threshold=args.soft_threshold,
        topology=topology)
    if topology == "single":
        name, man = next(iter(manifests.items()))
        model, log = regressor.train(man, cfg, roots[name], args.split, args.seed)
        regressor.save_model(model, os.path.join(out, "model.json"))
        _write_train_log(os.path.join(out, "train_log.csv"), log)
        print(f"trained {name} head: best medR {model.metadata['best_medr']}, "
              f"best R@1 {model.metadata['best_r1']:.1f}%")
    elif topology == "multihead":
        model, log = regressor.train_multihead(manifests, cfg, roots, args.split, args.seed)
        regressor.save_model(model, os.path.join(out, "model.json"))
        _write_train_log(os.path.join(out, "train_log.csv"), log)
        print(f"trained multihead model ({', '.join(model.net.head_names())})")
    else:
        models = regressor.train_multibranch(manifests, cfg, roots, args.split, args.seed)
        for name, model in sorted(models.items()):
            regressor.save_model(model, os.path.join(out, f"model_{name}.json"))
        print(f"trained {len(models)} branch models")
    _write_run_config(out, "train", args)
    return 0


def cmd_predict(args) -> int:
    out = _run_dir(args)
    table = _load_model_table(args.model)
    img = load_image(args.image)
    doc = {}
    for name in sorted(table):
        dist = regressor.predict(table[name], img, args.crops, args.seed)[name]
        doc[name] = {
            "probs": [round(float(p), 12) for p in dist.probs],
            "labels": list(dist.labels),
            "top_class": dist.top_class,
            "value": dist.value,
        }
        print(f"{name}: class {dist.top_class} value {dist.value:g} "
              f"labels {list(dist.labels)}")
    _write_json(os.path.join(out, "prediction.json"), doc)
    _write_run_config(out, "predict", args)
    return 0


def _read_pairs(path: str) -> list[evaluation.EvalPair]:
    pairs = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EoqaError(f"empty pairs file {path!r}")
        cols = [c.strip().lower() for c in header]
        if cols[:2] != ["target", "pred"]:
            raise EoqaError("pairs file must start with columns target,pred")
        for row in reader:
            if not row:
                continue
            target, pred = int(row[0]), int(row[1])
            probs = np.array([float(v) for v in row[2:]]) if len(row) > 2 else None
            pairs.append((target, pred, probs))
    return pairs


def cmd_evaluate(args) -> int:
    out = _run_dir(args)
    pairs = _read_pairs(args.pairs)
    doc = {
        "medR": evaluation.med_r(pairs),
        "R@1": evaluation.recall_at_k(pairs, 1),
        "R@5": evaluation.recall_at_k(pairs, 5),
    }
    doc.update({f"{k}@1": v for k, v in evaluation.prf_at_k(pairs, 1).items()})
    if all(p[2] is not None for p in pairs):
        doc["AUC"] = evaluation.macro_auc(pairs)
    for key in sorted(doc):
        print(f"{key} {doc[key]:.6g}")
    _write_json(os.path.join(out, "metrics.json"), doc)
    _write_run_config(out, "evaluate", args)
    return 0


def _convention_overrides(args) -> ScoreConvention:
    conv = ScoreConvention()
    if not getattr(args, "convention", None):
        return conv
    entries = dict(conv.entries)
    for item in args.convention:
        try:
            key, value = item.split("=", 1)
            name, fld = key.rsplit(".", 1)
            base = entries[name]
            entries[name] = MetricConvention(**{**base.__dict__, fld: float(value)})
        except (ValueError, KeyError, TypeError) as exc:
            raise EoqaError(f"bad convention override {item!r}: {exc}") from exc
    return ScoreConvention(entries)


def cmd_score(args) -> int:
    conv = _convention_overrides(args)
    vector = {"blur": args.blur, "snr": args.snr, "rer": args.rer,
              "sharpness": args.F, "gsd": args.gsd}
    print(f"{evaluation.aggregate_score(vector, conv):.4f}")
    return 0


def cmd_benchmark_dataset(args) -> int:
    out = _run_dir(args)
    table = _load_model_table(args.model)
    conv = _convention_overrides(args)
    report = benchmark_dataset(table, args.input, args.crops, args.seed, conv)
    report.save(os.path.join(out, "dataset_quality.csv"))
    _write_json(os.path.join(out, "manifest.json"),
                {"version": __version__, "seed": args.seed,
                 "convention": conv.as_dict(),
                 "images": [r[0] for r in report.rows[:-1]]})
    _write_run_config(out, "benchmark-dataset", args)
    print(report.to_csv(), end="")
    return 0


def cmd_benchmark_sr(args) -> int:
    out = _run_dir(args)
    method_names = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not method_names:
        print("error: no methods given", file=sys.stderr)
        return 2
    methods = []
    for name in method_names:
        if name == "nearest":
            methods.append(sr.SrMethod.nearest(args.scale))
        elif name == "bicubic":
            methods.append(sr.SrMethod.bicubic(args.scale))
        elif name == "tinysr":
            if not args.tinysr:
                print("error: method tinysr needs --tinysr CHECKPOINT", file=sys.stderr)
                return 2
            model = sr.load_sr_model(args.tinysr)
            heads = model.metadata.get("qmr_heads")
            label = "tinysr+qmr_" + "+".join(heads) if heads else "tinysr"
            methods.append(sr.SrMethod.trained(model, label))
        else:
            print(f"error: unknown method {name!r}", file=sys.stderr)
            return 2
    models = _load_model_table(args.model) if args.model else None
    conv = _convention_overrides(args)
    bench = benchmark_sr(methods, args.input, args.scale, args.blur_lr,
                         args.seed, models, conv)
    bench.fr.save(os.path.join(out, "sr_fr.csv"))
    bench.nr.save(os.path.join(out, "sr_nr.csv"))
    if bench.qmr is not None:
        bench.qmr.save(os.path.join(out, "sr_qmr.csv"))
    _write_json(os.path.join(out, "manifest.json"), bench.manifest)
    _write_run_config(out, "benchmark-sr", args)
    print(bench.fr.to_csv(), end="")
    return 0


def _build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="eoqa",
        description="Earth-observation image quality toolkit: synthetic "
                    "degradations, quality regression, metrics and benchmarks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    table: dict[str, argparse.ArgumentParser] = {}

    def common(p: argparse.ArgumentParser, out_help: str) -> None:
        p.add_argument("--seed", type=int, default=0, help="deterministic run seed")
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--threads", type=int, default=_default_threads(),
                       help=f"worker threads (default ${THREADS_ENV} or 1)")
        p.add_argument("--out", help=out_help)

    p = sub.add_parser("modify", help="generate an annotated degraded-crop dataset")
    p.add_argument("--input", required=True, help="directory of source images")
    p.add_argument("--modifier", required=True,
                   choices=[k.value for k in ModifierKind])
    p.add_argument("--n", type=int, help="grid size override")
    p.add_argument("--lo", type=float, help="grid lower bound override")
    p.add_argument("--hi", type=float, help="grid upper bound override")
    p.add_argument("--side", type=int, default=64, help="crop side in pixels")
    p.add_argument("--crops", type=int, default=8, help="crops per grid value")
    common(p, "dataset output directory")
    p.set_defaults(func=cmd_modify)
    table["modify"] = p

    p = sub.add_parser("train", help="train interval-classification heads")
    p.add_argument("--manifest", required=True, action="append",
                   help="dataset manifest path (repeat for multihead/multibranch)")
    p.add_argument("--topology", choices=sorted(regressor.TOPOLOGIES))
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--soft-threshold", type=float, default=0.3)
    p.add_argument("--side", type=int, default=64)
    p.add_argument("--crops", type=int, default=8)
    p.add_argument("--split", type=float, default=0.8, help="train fraction")
    common(p, "model output directory")
    p.set_defaults(func=cmd_train)
    table["train"] = p

    p = sub.add_parser("predict", help="predict quality parameters for one image")
    p.add_argument("--model", required=True, action="append", help="model checkpoint")
    p.add_argument("--image", required=True)
    p.add_argument("--crops", type=int, help="crop count override")
    common(p, "prediction output directory")
    p.set_defaults(func=cmd_predict)
    table["predict"] = p

    p = sub.add_parser("evaluate", help="retrieval metrics for a predictions CSV")
    p.add_argument("--pairs", required=True,
                   help="CSV with columns target,pred[,p0,p1,...]")
    common(p, "metrics output directory")
    p.set_defaults(func=cmd_evaluate)
    table["evaluate"] = p

    p = sub.add_parser("score", help="aggregate quality score for a metric vector")
    p.add_argument("--blur", type=float, required=True)
    p.add_argument("--snr", type=float, required=True)
    p.add_argument("--rer", type=float, required=True)
    p.add_argument("--F", type=float, required=True, help="sharpness factor")
    p.add_argument("--gsd", type=float, required=True)
    p.add_argument("--convention", action="append",
                   help="override, e.g. blur.range=2.5")
    common(p, argparse.SUPPRESS)
    p.set_defaults(func=cmd_score)
    table["score"] = p

    p = sub.add_parser("benchmark-dataset", help="quality table over an image directory")
    p.add_argument("--input", required=True, help="directory of images")
    p.add_argument("--model", required=True, action="append",
                   help="model checkpoints covering all five parameters")
    p.add_argument("--crops", type=int, help="crop count override")
    p.add_argument("--convention", action="append",
                   help="override, e.g. blur.range=2.5")
    common(p, "report output directory")
    p.set_defaults(func=cmd_benchmark_dataset)
    table["benchmark-dataset"] = p

    p = sub.add_parser("benchmark-sr", help="degrade/reconstruct benchmark tables")
    p.add_argument("--input", required=True, help="directory of reference images")
    p.add_argument("--scale", type=int, required=True, choices=(2, 3, 4))
    p.add_argument("--methods", default="nearest,bicubic",
                   help="comma list from: nearest, bicubic, tinysr")
    p.add_argument("--tinysr", help="trained SR checkpoint (for method tinysr)")
    p.add_argument("--blur-lr", action="store_true",
                   help="pre-blur references before downsampling")
    p.add_argument("--model", action="append",
                   help="regressor checkpoints for the quality table")
    p.add_argument("--convention", action="append",
                   help="override, e.g. blur.range=2.5")
    common(p, "report output directory")
    p.set_defaults(func=cmd_benchmark_sr)
    table["benchmark-sr"] = p

    return parser, table


def _coerce(value: str, action: argparse.Action):
    if isinstance(action, argparse._StoreTrueAction):
        lowered = value.strip().lower()
        if lowered not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"expected a boolean, got {value!r}")
        return lowered in ("true", "1", "yes")
    conv = action.type or str
    if action.nargs is None and isinstance(action, argparse._AppendAction):
        return [conv(v.strip()) for v in value.split(",")]
    return conv(value)


def _apply_config(path: str, command: str,
                  table: dict[str, argparse.ArgumentParser]) -> int | None:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    read = cp.read(path)
    if not read:
        print(f"error: cannot read config file {path!r}", file=sys.stderr)
        return 2
    sp = table[command]
    actions = {a.dest: a for a in sp._actions
               if a.dest not in ("help", "config", "func", "command")}
    for section in cp.sections():
        if section not in ("run", command):
            if section in table:
                continue  # settings for other subcommands are legitimate
            print(f"error: unknown config section [{section}]", file=sys.stderr)
            return 2
    defaults = {}
    for section in ("run", command):
        if not cp.has_section(section):
            continue
        allowed = ({"seed", "threads", "out"} if section == "run"
                   else set(actions))
        for key, value in cp.items(section):
            dest = key.replace("-", "_")
            if dest not in allowed or dest not in actions:
                print(f"error: unknown config key {key!r} in section [{section}]",
                      file=sys.stderr)
                return 2
            try:
                defaults[dest] = _coerce(value, actions[dest])
            except (ValueError, TypeError) as exc:
                print(f"error: bad value for {key!r}: {exc}", file=sys.stderr)
                return 2
            # a value from the config satisfies a required flag
            actions[dest].required = False
    sp.set_defaults(**defaults)
    return None


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, table = _build_parser()

    # Apply --config before the real parse so flags override file values.
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in table), None)
    if known.config and command:
        status = _apply_config(known.config, command, table)
        if status is not None:
            return status

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (EoqaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
