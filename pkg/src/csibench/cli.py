"""Command-line entry point.

Commands: gen, convert, train, eval, curve, crossenv. Every run writes a
resolved manifest next to its outputs so results are reproducible from the
file alone. Exit codes: 0 success, 2 usage error, 3 data/format error,
4 protocol error.

numpy is imported lazily: `--threads N` (or CSI_BENCH_THREADS) caps the BLAS
thread pools and must take effect before the first numpy import. N=1 forces
the fully deterministic single-threaded path used by the reproducibility
checks.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .errors import CsiBenchError, ProtocolError

_THREAD_ENV_VARS = (
    "OPENBLAS_NUM_THREADS",
    "OMP_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)

MODEL_CHOICES = ("lda", "nbsvm", "ksvm", "forest", "cnn")
SET_CHOICES = ("A", "B", "C", "D", "E", "F")


def _apply_thread_cap(threads: int | None) -> None:
    if threads is None:
        env = os.environ.get("CSI_BENCH_THREADS")
        if env and env.isdigit():
            threads = int(env)
    if threads is None:
        return
    if threads < 1:
        raise ProtocolError("--threads must be >= 1")
    for var in _THREAD_ENV_VARS:
        os.environ[var] = str(threads)


def _write_manifest(path: str, command: str, resolved: dict) -> None:
    payload = {
        "schema": 1,
        "tool": "csibench",
        "tool_version": __version__,
        "command": command,
        "arguments": dict(sorted(resolved.items())),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_gen(args) -> int:
    from . import synth
    from .data import write_csd

    env = synth.env_by_id(args.env)
    dataset = synth.gen_dataset(env, args.per_class, seed=args.seed)
    with open(args.out, "wb") as fh:
        n = write_csd(dataset, fh)
    _write_manifest(
        args.out + ".manifest.json",
        "gen",
        {"env": env.env_id, "per_class": args.per_class, "seed": args.seed, "out": args.out},
    )
    print(f"wrote {len(dataset)} samples ({n} bytes) to {args.out}")
    return 0


def cmd_convert(args) -> int:
    from .data import (
        dataset_from_tensors,
        read_csd,
        read_npy_tensors,
        write_csd,
        write_npy,
    )

    src, dst = args.input, args.out
    if src.endswith(".csd") and dst.endswith(".npy"):
        with open(src, "rb") as fh:
            dataset = read_csd(fh)
        with open(dst, "wb") as fh:
            write_npy(dataset, fh)
        print("warning: NPY stores tensors only; labels were dropped", file=sys.stderr)
    elif src.endswith(".npy") and dst.endswith(".csd"):
        with open(src, "rb") as fh:
            tensors = read_npy_tensors(fh)
        print(
            "warning: NPY carries no labels; all samples labeled stand", file=sys.stderr
        )
        dataset = dataset_from_tensors(tensors, environment_id=args.env_tag)
        with open(dst, "wb") as fh:
            write_csd(dataset, fh)
    else:
        raise UsageError("convert needs a .csd->.npy or .npy->.csd pair")
    _write_manifest(
        dst + ".manifest.json", "convert", {"input": src, "out": dst, "env_tag": args.env_tag}
    )
    print(f"converted {src} -> {dst}")
    return 0


def cmd_train(args) -> int:
    from .data import read_csd
    from .evalproto import make_split
    from .models import save_model_file, train_model
    from .rng import derive_seed

    with open(args.data, "rb") as fh:
        dataset = read_csd(fh)
    plan = make_split(dataset, args.seed)
    subset = dataset.subset(plan.sets[args.set])
    hyper = {
        key: value
        for key, value in {
            "ridge": args.ridge,
            "C": args.C,
            "tol": args.tol,
            "max_passes": args.max_passes,
            "mode": args.nb_mode,
            "kernel": args.kernel,
            "gamma": args.gamma,
            "poly_c": args.poly_c,
            "poly_d": args.poly_d,
            "n_trees": args.trees,
            "max_features": args.max_features,
            "max_depth": args.max_depth,
            "epochs": args.epochs,
            "batch_size": args.batch_size,
            "learning_rate": args.learning_rate,
            "momentum": args.momentum,
        }.items()
        if value is not None
    }
    hyper = _filter_hyper(args.model, hyper)
    model = train_model(
        args.model,
        subset.samples,
        seed=derive_seed(args.seed, "train", args.model, args.set),
        **hyper,
    )
    save_model_file(model, args.out)
    _write_manifest(
        args.out + ".manifest.json",
        "train",
        {
            "model": args.model,
            "data": args.data,
            "set": args.set,
            "seed": args.seed,
            "out": args.out,
            "hyper": model.hyper,
        },
    )
    print(f"trained {args.model} on set {args.set} ({len(subset)} samples) -> {args.out}")
    return 0


_HYPER_KEYS = {
    "lda": {"ridge"},
    "nbsvm": {"C", "tol", "max_passes", "mode"},
    "ksvm": {"C", "tol", "max_passes", "kernel", "gamma", "poly_c", "poly_d"},
    "forest": {"n_trees", "max_features", "max_depth"},
    "cnn": {"epochs", "batch_size", "learning_rate", "momentum"},
}


def _filter_hyper(model: str, hyper: dict) -> dict:
    allowed = _HYPER_KEYS[model]
    extras = set(hyper) - allowed
    if extras:
        raise UsageError(
            f"options {sorted(extras)} do not apply to model {model!r}"
        )
    return hyper


def cmd_eval(args) -> int:
    from .data import read_csd
    from .evalproto import evaluate, write_eval_reports
    from .models import load_model_file

    model = load_model_file(args.model_file)
    with open(args.data, "rb") as fh:
        dataset = read_csd(fh)
    report = evaluate(model, dataset)
    json_path, csv_path = args.out_prefix + ".json", args.out_prefix + ".csv"
    write_eval_reports([report], json_path, csv_path, kind="evaluation")
    _write_manifest(
        args.out_prefix + ".manifest.json",
        "eval",
        {"model_file": args.model_file, "data": args.data, "out_prefix": args.out_prefix},
    )
    print(f"{model.kind} on {dataset.environment_id or args.data}: accuracy {report.accuracy:.4f}")
    return 0


def cmd_curve(args) -> int:
    from .data import read_csd
    from .evalproto import learning_curve, write_curve_reports

    with open(args.data, "rb") as fh:
        dataset = read_csd(fh)
    result = learning_curve(dataset, seed=args.seed)
    json_path, csv_path = args.out_prefix + ".json", args.out_prefix + ".csv"
    write_curve_reports(result, json_path, csv_path)
    _write_manifest(
        args.out_prefix + ".manifest.json",
        "curve",
        {"data": args.data, "seed": args.seed, "out_prefix": args.out_prefix},
    )
    for cell in result.cells:
        print(
            f"{cell.model_kind:7s} set {cell.set_name}  accuracy {cell.report.accuracy:.4f}"
        )
    return 0


def cmd_crossenv(args) -> int:
    from .data import read_csd
    from .evalproto import cross_env, evaluate, train_set_models, write_eval_reports

    with open(args.data, "rb") as fh:
        train_ds = read_csd(fh)
    with open(args.envb, "rb") as fh:
        other_ds = read_csd(fh)
    models = train_set_models(train_ds, seed=args.seed, set_name="F")
    reports = cross_env(models, other_ds)
    json_path, csv_path = args.out_prefix + ".json", args.out_prefix + ".csv"
    write_eval_reports(reports, json_path, csv_path, kind="cross_environment", seed=args.seed)
    _write_manifest(
        args.out_prefix + ".manifest.json",
        "crossenv",
        {
            "data": args.data,
            "envb": args.envb,
            "seed": args.seed,
            "out_prefix": args.out_prefix,
        },
    )
    for report in reports:
        print(f"{report.model_id:7s} on {report.dataset_id}: accuracy {report.accuracy:.4f}")
    return 0


class UsageError(CsiBenchError):
    """Invalid flag combination detected after parsing."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csibench",
        description="WLAN CSI posture-recognition benchmark toolkit",
    )
    parser.add_argument("--threads", type=int, default=None, help="cap BLAS thread pools (1 = fully deterministic)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic labeled dataset (CSD1)")
    p.add_argument("--env", required=True, choices=("A", "B"))
    p.add_argument("--per-class", type=int, required=True, dest="per_class")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("convert", help="convert between CSD1 and NPY")
    p.add_argument("--in", required=True, dest="input")
    p.add_argument("--out", required=True)
    p.add_argument("--env-tag", default="", dest="env_tag", help="environment tag for npy->csd")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("train", help="train one model on a protocol subset")
    p.add_argument("--model", required=True, choices=MODEL_CHOICES)
    p.add_argument("--data", required=True)
    p.add_argument("--set", required=True, choices=SET_CHOICES)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.add_argument("--ridge", type=float, default=None)
    p.add_argument("--c", type=float, default=None, dest="C")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-passes", type=int, default=None, dest="max_passes")
    p.add_argument("--nb-mode", choices=("likelihood", "posterior"), default=None, dest="nb_mode")
    p.add_argument("--kernel", choices=("linear", "poly", "rbf"), default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--poly-c", type=float, default=None, dest="poly_c")
    p.add_argument("--poly-d", type=int, default=None, dest="poly_d")
    p.add_argument("--trees", type=int, default=None)
    p.add_argument("--max-features", type=int, default=None, dest="max_features")
    p.add_argument("--max-depth", type=int, default=None, dest="max_depth")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--lr", type=float, default=None, dest="learning_rate")
    p.add_argument("--momentum", type=float, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model file on a dataset file")
    p.add_argument("--model-file", required=True, dest="model_file")
    p.add_argument("--data", required=True)
    p.add_argument("--out-prefix", required=True, dest="out_prefix")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curve", help="learning-curve grid: 5 models x sets A..F")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out-prefix", required=True, dest="out_prefix")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("crossenv", help="train set-F models and score them on another room")
    p.add_argument("--data", required=True, help="training dataset (environment A)")
    p.add_argument("--envb", required=True, help="evaluation dataset from the other room")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out-prefix", required=True, dest="out_prefix")
    p.set_defaults(func=cmd_crossenv)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_thread_cap(args.threads)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except ProtocolError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return 4
    except CsiBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
