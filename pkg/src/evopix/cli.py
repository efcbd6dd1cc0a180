"""Command-line interface.

Subcommands: evolve, apply, train, surface, divergence, baseline, replay.
Every run writes a manifest (resolved argv + versions) next to its output;
`replay` re-executes a manifest, optionally redirecting the output path.

Dataset arguments accept three forms:
  synth:seed=0,classes=2,per_class=200,shape=1x8x8[,noise=0.18][,split=test]
  path/to/dataset.npz
  path/to/images.idx[.gz],path/to/labels.idx[.gz]
"""
from __future__ import annotations

import argparse
import json
import platform
import sys

import numpy as np

from . import __version__
from .analysis import loss_surface, surface_table
from .data import LabeledDataset, load_dataset, load_idx, save_dataset, synth_dataset
from .engine import init_network, load_checkpoint, save_checkpoint
from .errors import EvopixError
from .fitness import (
    SearchConfig,
    domain_divergence,
    mdd_es_search,
    write_generation_logs,
)
from .optim import OptimizerConfig, train
from .perturb import (
    apply_perturbation,
    baseline_column,
    baseline_uniform,
    load_perturbation,
    save_perturbation,
)

MANIFEST_VERSION = 1


class _CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we want exit code 1
        raise _CliError(message)


def resolve_dataset(spec: str) -> LabeledDataset:
    if spec.startswith("synth:"):
        opts = {}
        for part in spec[len("synth:"):].split(","):
            if not part:
                continue
            key, _, value = part.partition("=")
            opts[key.strip()] = value.strip()
        shape = tuple(int(v) for v in opts.get("shape", "1x8x8").split("x"))
        train_ds, test_ds = synth_dataset(
            seed=int(opts.get("seed", 0)),
            classes=int(opts.get("classes", 2)),
            per_class=int(opts.get("per_class", 200)),
            shape=shape,
            test_per_class=(int(opts["test_per_class"])
                            if "test_per_class" in opts else None),
            noise=float(opts.get("noise", 0.15)),
            blobs=int(opts.get("blobs", 4)),
            max_shift=int(opts.get("max_shift", 1)),
            background=float(opts.get("background", 0.0)),
            border=float(opts.get("border", 0.0)),
        )
        which = opts.get("split", "train")
        if which not in ("train", "test"):
            raise _CliError(f"synth split must be train or test, got {which!r}")
        return train_ds if which == "train" else test_ds
    if "," in spec:
        images_path, labels_path = spec.split(",", 1)
        return load_idx(images_path, labels_path)
    if spec.endswith(".npz"):
        return load_dataset(spec)
    raise _CliError(f"unrecognized dataset spec {spec!r}")


def _write_manifest(out_path: str, command: str, argv: list[str]) -> str:
    manifest = {
        "version": MANIFEST_VERSION,
        "package": "evopix",
        "package_version": __version__,
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
        "command": command,
        "argv": list(argv),
    }
    path = f"{out_path}.manifest.json"
    with open(path, "w") as f:
        json.dump(manifest, f, indent=1)
        f.write("\n")
    return path


def _build_parser() -> _Parser:
    parser = _Parser(prog="evopix")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="search for pixel perturbations")
    p.add_argument("--dataset", required=True)
    p.add_argument("--np", dest="max_pixels", type=int, default=1)
    p.add_argument("--pop", type=int, default=None)
    p.add_argument("--gens", type=int, default=15)
    p.add_argument("--sigma0", type=float, default=1.0)
    p.add_argument("--arch", default=None)
    p.add_argument("--optimizer", default="adam")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--subset", type=int, default=2000)
    p.add_argument("--holdout", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-dataset", default=None,
                   help="clean test set, logged per generation (diagnostic only)")
    p.add_argument("--out", required=True, help="perturbation file to write")

    p = sub.add_parser("apply", help="corrupt a dataset with a perturbation file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--perturbation", required=True)
    p.add_argument("--out", required=True, help=".npz dataset to write")

    p = sub.add_parser("train", help="train one network, write a checkpoint")
    p.add_argument("--dataset", required=True)
    p.add_argument("--perturbation", default=None)
    p.add_argument("--optimizer", default="sgd")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--augment", action="store_true")
    p.add_argument("--arch", default=None)
    p.add_argument("--eval-dataset", default=None)
    p.add_argument("--out", required=True, help="checkpoint file to write")

    p = sub.add_parser("surface", help="interpolate between two checkpoints")
    p.add_argument("--ckpt-a", required=True, help="alpha=0 endpoint (SGD side)")
    p.add_argument("--ckpt-b", required=True, help="alpha=1 endpoint (ADAM side)")
    p.add_argument("--dataset", required=True)
    p.add_argument("--eval-dataset", required=True)
    p.add_argument("--alphas", type=int, default=21)
    p.add_argument("--out", required=True, help="delimited table to write")

    p = sub.add_parser("divergence", help="proxy distribution distance")
    p.add_argument("--dataset", required=True, help="clean dataset")
    p.add_argument("--corrupted", required=True, help="corrupted dataset")
    p.add_argument("--holdout", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="record file to write")

    p = sub.add_parser("baseline", help="construct a baseline perturbation")
    p.add_argument("--mode", choices=["uniform", "column"], required=True)
    p.add_argument("--dataset", required=True, help="source of shape and classes")
    p.add_argument("--np", dest="max_pixels", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="perturbation file to write")

    p = sub.add_parser("replay", help="re-run a recorded manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="override the recorded output path")
    return parser


def _cmd_evolve(args, argv) -> int:
    ds = resolve_dataset(args.dataset)
    eval_ds = resolve_dataset(args.eval_dataset) if args.eval_dataset else None
    cfg = SearchConfig(
        max_pixels=args.max_pixels, generations=args.gens, population=args.pop,
        sigma0=args.sigma0, arch=args.arch, optimizer=args.optimizer,
        epochs=args.epochs, batch_size=args.batch, train_subset=args.subset,
        holdout_fraction=args.holdout, master_seed=args.seed,
    )
    best, logs = mdd_es_search(ds, cfg, ds_test_clean=eval_ds)
    save_perturbation(args.out, best)
    write_generation_logs(f"{args.out}.log.jsonl", logs)
    _write_manifest(args.out, "evolve", argv)
    last = logs[-1]
    print(f"generations={len(logs)} best_f_total={last.best_ever_f_total!r} "
          f"perturbation={args.out}")
    return 0


def _cmd_apply(args, argv) -> int:
    ds = resolve_dataset(args.dataset)
    p = load_perturbation(args.perturbation)
    save_dataset(args.out, apply_perturbation(ds, p))
    _write_manifest(args.out, "apply", argv)
    print(f"corrupted dataset written to {args.out}")
    return 0


def _cmd_train(args, argv) -> int:
    ds = resolve_dataset(args.dataset)
    if args.perturbation:
        ds = apply_perturbation(ds, load_perturbation(args.perturbation))
    eval_ds = resolve_dataset(args.eval_dataset) if args.eval_dataset else None
    arch = args.arch or f"8C3-P-16C3-P-64FC-{ds.num_classes}S"
    net = init_network(arch, ds.image_shape, seed=args.seed)
    cfg = OptimizerConfig.default(args.optimizer)
    trained, history = train(net, ds, cfg, epochs=args.epochs,
                             batch_size=args.batch, seed=args.seed,
                             augment=args.augment, eval_ds=eval_ds)
    save_checkpoint(args.out, trained, binary=True)
    with open(f"{args.out}.history.jsonl", "w") as f:
        f.write(history.to_jsonl())
    _write_manifest(args.out, "train", argv)
    last = history.epochs[-1]
    print(f"epochs={len(history.epochs)} train_acc={last.train_acc!r} "
          f"checkpoint={args.out}")
    return 0


def _cmd_surface(args, argv) -> int:
    net_a = load_checkpoint(args.ckpt_a)
    net_b = load_checkpoint(args.ckpt_b)
    ds_train = resolve_dataset(args.dataset)
    ds_test = resolve_dataset(args.eval_dataset)
    points = loss_surface(net_a, net_b, ds_train, ds_test, n_alphas=args.alphas)
    with open(args.out, "w") as f:
        f.write(surface_table(points))
    _write_manifest(args.out, "surface", argv)
    print(f"{len(points)} interpolation points written to {args.out}")
    return 0


def _cmd_divergence(args, argv) -> int:
    clean = resolve_dataset(args.dataset)
    corrupted = resolve_dataset(args.corrupted)
    epsilon, f_d, d_a = domain_divergence(clean, corrupted, split=args.holdout,
                                          seed=args.seed)
    record = json.dumps({"epsilon": epsilon, "f_d": f_d, "d_A": d_a})
    with open(args.out, "w") as f:
        f.write(record)
        f.write("\n")
    _write_manifest(args.out, "divergence", argv)
    print(record)
    return 0


def _cmd_baseline(args, argv) -> int:
    ds = resolve_dataset(args.dataset)
    if args.mode == "uniform":
        p = baseline_uniform(ds.num_classes, args.max_pixels, ds.image_shape,
                             seed=args.seed)
    else:
        p = baseline_column(ds.num_classes, args.max_pixels, ds.image_shape)
    save_perturbation(args.out, p)
    _write_manifest(args.out, "baseline", argv)
    print(f"{args.mode} perturbation written to {args.out}")
    return 0


def _cmd_replay(args) -> int:
    with open(args.manifest) as f:
        manifest = json.load(f)
    if manifest.get("version") != MANIFEST_VERSION:
        raise _CliError(f"unsupported manifest version {manifest.get('version')!r}")
    argv = list(manifest["argv"])
    if args.out is not None:
        if "--out" not in argv:
            raise _CliError("recorded argv has no --out to override")
        argv[argv.index("--out") + 1] = args.out
    return cli(argv)


def cli(argv: list[str]) -> int:
    """Run one command; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "evolve":
            return _cmd_evolve(args, argv)
        if args.command == "apply":
            return _cmd_apply(args, argv)
        if args.command == "train":
            return _cmd_train(args, argv)
        if args.command == "surface":
            return _cmd_surface(args, argv)
        if args.command == "divergence":
            return _cmd_divergence(args, argv)
        if args.command == "baseline":
            return _cmd_baseline(args, argv)
        if args.command == "replay":
            return _cmd_replay(args)
        raise _CliError(f"unknown command {args.command!r}")  # pragma: no cover
    except (_CliError, EvopixError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
