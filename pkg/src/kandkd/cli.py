"""Command-line front end: prepare, gen-synthetic, train-teacher, train-student, distill, eval, export-embeddings."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import config as C
from .data import DataError, MissingColumnError, gen_synthetic, load_csv, load_dataset, prepare, save_dataset
from .kan import kan_init
from .metrics import evaluate, export_embeddings
from .mlp import mlp_init
from .store import ModelFormatError, load_model, save_model
from .train import DivergenceError, distill_student, parameter_digest, train_teacher, write_history

log = logging.getLogger("kandkd")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4
EXIT_MODEL = 5
EXIT_MISSING = 6

OUTPUT_ENV = "KANDKD_OUTPUT_DIR"


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# --------------------------------------------------------------------------- helpers


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUTPUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise CliError(f"file not found: {path}", EXIT_MISSING)
    return path


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _flags(args) -> dict:
    keys = {
        "grid": "grid", "order": "order", "alpha": "alpha", "beta": "beta", "lam": "lambda",
        "warmup": "warmup", "temperature": "temperature", "epochs": "epochs", "batch": "batch",
        "lr": "lr", "seed": "seed", "mask_prob": "mask_prob", "scaler": "scaler", "split": "split",
        "optimizer": "optimizer", "teacher_hidden": "teacher_hidden", "student_hidden": "student_hidden",
        "activation": "activation", "test_fraction": "test_fraction", "class_weights": "class_weights",
    }
    out = {cfg_key: getattr(args, attr, None) for attr, cfg_key in keys.items()}
    if getattr(args, "deterministic", False):
        out["deterministic"] = True
    return out


def _resolve(args) -> dict:
    try:
        return C.resolve(args.preset, args.config, _flags(args))
    except (C.ConfigError, OSError) as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc


def _load_data(path):
    try:
        return load_dataset(_require(path))
    except DataError as exc:
        raise CliError(str(exc), EXIT_DATA) from exc


def _load_net(path, kind=None):
    try:
        return load_model(_require(path), kind)
    except ModelFormatError as exc:
        raise CliError(f"{path}: {exc}", EXIT_MODEL) from exc


def _check_preset_dims(cfg, n_features):
    expected = C.PRESETS.get(cfg.get("preset") or "", {}).get("n_features")
    if expected is not None and expected != n_features:
        raise CliError(
            f"preset {cfg['preset']!r} expects {expected} features but the dataset has {n_features}; "
            "drop --preset or prepare the matching dataset",
            EXIT_MODEL,
        )


def write_manifest(out: Path, name: str, cfg: dict, inputs: list, artifacts: dict) -> Path:
    manifest = {
        "tool": "kandkd",
        "version": __version__,
        "command": name,
        "config": cfg,
        "seed": cfg.get("seed"),
        "inputs": {str(p): _digest(p) for p in inputs},
        "artifacts": {k: str(v) for k, v in artifacts.items()},
    }
    path = out / f"{name}_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _report(model, data, out: Path, stem: str, title: str) -> str:
    rep = evaluate(model, data)
    n_params = model.parameter_count()
    (out / f"{stem}_metrics.txt").write_text(rep.to_keyvalue({"n_params": n_params}))
    (out / f"{stem}_confusion.csv").write_text(rep.confusion_csv())
    return rep.to_table(title, n_params)


# --------------------------------------------------------------------------- commands


def cmd_gen_synthetic(args):
    ds = gen_synthetic(args.n_normal, args.n_attack, args.features, args.seed)
    path = Path(args.out_csv)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write("Timestamp," + ",".join(ds.feature_names) + ",Normal/Attack\n")
        for i, (row, lab) in enumerate(zip(ds.features, ds.labels)):
            fh.write(f"{i}," + ",".join(f"{v:.6f}" for v in row) + ("," + ("Attack" if lab else "Normal")) + "\n")
    print(f"wrote {len(ds)} rows ({int(ds.labels.sum())} attack) to {path}")


def cmd_prepare(args):
    cfg = _resolve(args)
    src = _require(args.csv)
    try:
        table = load_csv(src, args.label_column, args.positive_label, args.delimiter)
        train, test = prepare(
            table,
            test_fraction=cfg["test_fraction"],
            seed=cfg["seed"],
            shuffle=cfg["split"] == "shuffled",
            scaler=cfg["scaler"],
            mask_prob=cfg["mask_prob"],
        )
    except MissingColumnError as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc
    except DataError as exc:
        raise CliError(str(exc), EXIT_DATA) from exc
    _check_preset_dims(cfg, train.n_features)
    out = _out_dir(args)
    save_dataset(train, out / "train.kdds")
    save_dataset(test, out / "test.kdds")
    drops = train.info["dropped_columns"]
    lines = [f"{name}\t{reason}" for name, reason in drops]
    (out / "dropped_columns.tsv").write_text("column\treason\n" + "".join(l + "\n" for l in lines))
    counts = {}
    for _, reason in drops:
        counts[reason] = counts.get(reason, 0) + 1
    print(f"columns dropped: {len(drops)}")
    for reason, n in sorted(counts.items()):
        print(f"  {reason}: {n}")
    print(f"rows dropped (scattered missing): {train.info['rows_dropped_missing']}")
    print(f"features retained: {train.n_features}")
    print(f"train rows: {len(train)} ({int(train.labels.sum())} attack)  "
          f"test rows: {len(test)} ({int(test.labels.sum())} attack)")
    print(f"label mapping: {train.info['label_mapping']}")


def _finish(model, history, out, stem, cfg, args, title):
    save_model(model, out / f"{stem}.kdkd")
    write_history(history, out / f"{stem}_history.csv")
    print(f"{stem}: {model.parameter_count():,} parameters, final loss {history[-1].total_loss:.6f}")
    if args.test:
        print(_report(model, _load_data(args.test), out, stem, title), end="")


def cmd_train_teacher(args):
    cfg = _resolve(args)
    train = _load_data(args.train)
    _check_preset_dims(cfg, train.n_features)
    out = _out_dir(args)
    inputs = [args.train] + ([args.test] if args.test else [])
    write_manifest(out, "teacher", cfg, inputs, {"model": out / "teacher.kdkd"})
    net = kan_init(C.teacher_dims(cfg, train.n_features), C.spline_grid(cfg), cfg["seed"])
    net, history = train_teacher(net, train, C.train_config(cfg))
    _finish(net, history, out, "teacher", cfg, args, "KAN teacher")


def cmd_train_student(args):
    cfg = _resolve(args)
    train = _load_data(args.train)
    _check_preset_dims(cfg, train.n_features)
    out = _out_dir(args)
    inputs = [args.train] + ([args.test] if args.test else [])
    write_manifest(out, "student", cfg, inputs, {"model": out / "student.kdkd"})
    net = mlp_init(C.student_dims(cfg, train.n_features), cfg["seed"], cfg["activation"])
    net, history = train_teacher(net, train, C.train_config(cfg))
    _finish(net, history, out, "student", cfg, args, "MLP student (no distillation)")


def cmd_distill(args):
    cfg = _resolve(args)
    train = _load_data(args.train)
    _check_preset_dims(cfg, train.n_features)
    teacher = _load_net(args.teacher, "kan")
    if teacher.input_dim != train.n_features:
        raise CliError(
            f"teacher expects {teacher.input_dim} features, dataset has {train.n_features}", EXIT_MODEL
        )
    out = _out_dir(args)
    inputs = [args.train, args.teacher] + ([args.test] if args.test else [])
    write_manifest(out, "dkd_student", cfg, inputs, {"model": out / "dkd_student.kdkd"})
    student = mlp_init(C.student_dims(cfg, train.n_features), cfg["seed"], cfg["activation"])
    before = parameter_digest(teacher)
    student, history = distill_student(student, teacher, train, C.train_config(cfg, distill=True))
    assert parameter_digest(teacher) == before
    _finish(student, history, out, "dkd_student", cfg, args, "DKD-MLP student")


def cmd_eval(args):
    model = _load_net(args.model)
    data = _load_data(args.data)
    if model.input_dim != data.n_features:
        raise CliError(
            f"model expects {model.input_dim} features, dataset has {data.n_features}", EXIT_MODEL
        )
    out = _out_dir(args)
    stem = args.name or Path(args.model).stem + "_eval"
    print(_report(model, data, out, stem, f"{model.kind.upper()} {model.dims}"), end="")


def cmd_export_embeddings(args):
    model = _load_net(args.model)
    data = _load_data(args.data)
    if model.input_dim != data.n_features:
        raise CliError(
            f"model expects {model.input_dim} features, dataset has {data.n_features}", EXIT_MODEL
        )
    try:
        path = export_embeddings(model, data, args.layer, args.out_file)
    except OSError as exc:
        raise CliError(f"cannot write {args.out_file}: {exc}", EXIT_DATA) from exc
    print(f"wrote {len(data)} embeddings to {path}")


def cmd_show_config(args):
    cfg = _resolve(args)
    n = C.PRESETS.get(cfg["preset"] or "", {}).get("n_features")
    for key in sorted(cfg):
        print(f"{key} = {cfg[key]}")
    if n is not None:
        print(f"teacher_dims = {C.teacher_dims(cfg, n)}")
        print(f"student_dims = {C.student_dims(cfg, n)}")


# --------------------------------------------------------------------------- parser


def _add_config_flags(p, training=True):
    p.add_argument("--preset", choices=sorted(C.PRESETS))
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--out", help=f"output directory (default ${OUTPUT_ENV} or .)")
    if not training:
        return
    p.add_argument("--grid", type=int, help="spline grid size G")
    p.add_argument("--order", type=int, help="spline order K")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--warmup", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--optimizer", choices=["adam", "sgd"])
    p.add_argument("--teacher-hidden", type=int, nargs="+")
    p.add_argument("--student-hidden", type=int, nargs="+")
    p.add_argument("--activation", choices=["relu", "tanh", "silu"])
    p.add_argument("--class-weights", type=float, nargs=2)
    p.add_argument("--deterministic", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kandkd", description=__doc__)
    parser.add_argument("--version", action="version", version=f"kandkd {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a synthetic attack-file CSV")
    p.add_argument("out_csv")
    p.add_argument("--n-normal", type=int, default=18800)
    p.add_argument("--n-attack", type=int, default=1200)
    p.add_argument("--features", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("prepare", help="clean, split and scale an attack-file CSV")
    p.add_argument("csv")
    p.add_argument("--label-column", required=True)
    p.add_argument("--positive-label", nargs="+", help="label values that mean attack")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--mask-prob", type=float)
    p.add_argument("--scaler", choices=["standard", "minmax"])
    p.add_argument("--split", choices=["sequential", "shuffled"])
    _add_config_flags(p, training=False)
    p.set_defaults(func=cmd_prepare)

    for name, func, helptext in (
        ("train-teacher", cmd_train_teacher, "train the KAN teacher"),
        ("train-student", cmd_train_student, "train the MLP student on labels only"),
        ("distill", cmd_distill, "distill the teacher into an MLP student with DKD"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--train", required=True, help="prepared training set (.kdds)")
        p.add_argument("--test", help="prepared test set; adds a metrics report")
        if name == "distill":
            p.add_argument("--teacher", required=True, help="teacher model file")
        _add_config_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="evaluate a model on a prepared dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--name", help="stem for the report files")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-embeddings", help="dump penultimate-layer or logit embeddings")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--layer", choices=["penultimate", "logits"], default="penultimate")
    p.add_argument("out_file")
    p.set_defaults(func=cmd_export_embeddings)

    p = sub.add_parser("show-config", help="print the resolved configuration")
    _add_config_flags(p)
    p.set_defaults(func=cmd_show_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except CliError as exc:
        print(f"kandkd: error: {exc}", file=sys.stderr)
        return exc.code
    except DivergenceError as exc:
        print(f"kandkd: error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"kandkd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
