"""Command-line entry point: ``actgrad {train,compare,pso,gradcheck,fetch-data}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import data as D
from . import experiment as E
from . import gradcheck as G
from . import layers as L
from .checkpoint import save_checkpoint
from .pretrain import AePretrainConfig
from .pso import SwarmConfig, pso_train

EXIT_USAGE = 2
PSO_FIELDS = ("generation", "best_fitness", "val_accuracy")


class UsageError(Exception):
    pass


def load_datasets(data_dir):
    """Merged train set and test set; the test batch doubles as the validation set."""
    return D.load_cifar10(data_dir)


def _data_dir(args):
    return args.data_dir or os.environ.get(D.DATA_DIR_ENV)


def _datasets(args):
    try:
        return load_datasets(_data_dir(args))
    except FileNotFoundError as exc:
        raise UsageError(f"data not found: {exc}. Run `actgrad fetch-data --data-dir DIR` or set {D.DATA_DIR_ENV}.")


def _print_summary(label, records):
    s = E.summary_row(records)
    print(f"{'method':<28s} {'train acc':>9s} {'train loss':>10s} {'val acc':>9s} {'val loss':>9s}")
    print(f"{label:<28s} {s['train_accuracy']:9.4f} {s['train_loss']:10.3f} "
          f"{s['val_accuracy']:9.4f} {s['val_loss']:9.3f}")


def cmd_train(args):
    if args.with_baseline and not args.pretrain_ae:
        raise UsageError("--with-baseline only makes sense together with --pretrain-ae")
    out_dir = Path(args.out_dir)
    if args.manifest:
        manifest = E.RunManifest.from_dict(json.loads(Path(args.manifest).read_text()))
        runs = [(args.name or Path(args.manifest).name.split(".")[0], manifest)]
    else:
        model_cfg = L.ModelConfig(size=args.size, activation=args.activation,
                                  seed=E.derived_seed(args.seed, "model"), per_channel=args.per_channel)
        data = {"data_dir": str(_data_dir(args)) if _data_dir(args) else None,
                "train_subset": args.subset, "val_subset": args.val_subset}
        pretrain = None
        if args.pretrain_ae:
            pretrain = AePretrainConfig(epochs_per_layer=args.ae_epochs, batch_size=args.batch_size,
                                        seed=E.derived_seed(args.seed, "pretrain"))
        name = args.name or f"{args.size}_{args.activation}" + ("_ae" if pretrain else "")
        manifest = E.make_manifest(model_cfg, args.epochs, args.batch_size, args.lr_scale, data, args.seed,
                                   pretrain, pretrained_column=args.pretrain_ae)
        runs = [(name, manifest)]
        if args.with_baseline:
            base = E.make_manifest(model_cfg, args.epochs, args.batch_size, args.lr_scale, data, args.seed,
                                   None, pretrained_column=True)
            runs.append((f"{args.size}_{args.activation}_baseline", base))
    datasets = _datasets(args)
    for name, manifest in runs:
        print(f"== {name}")
        result = E.run_training(manifest, out_dir, name, datasets=datasets, echo=print)
        _print_summary(name, result.records)
        print(f"metrics: {result.csv_path}\ncheckpoint: {result.checkpoint_path}")
    return 0


def cmd_compare(args):
    for path in [args.baseline] + [v.split("=", 1)[-1] for v in args.variant]:
        if not Path(path).exists():
            raise UsageError(f"metrics CSV not found: {path}")
    baseline = E.read_metrics_csv(args.baseline)
    rows = []
    for entry in args.variant:
        label, _, path = entry.rpartition("=")
        label = label or Path(path).stem
        val, train = E.improvement(baseline, E.read_metrics_csv(path))
        rows.append({"size": args.label, "variant": label,
                     "val_improvement_pct": f"{val:.2f}", "train_improvement_pct": f"{train:.2f}"})
    print(f"{'size':<8s} {'variant':<12s} {'validation (%)':>15s} {'training (%)':>13s}")
    for r in rows:
        print(f"{r['size']:<8s} {r['variant']:<12s} {r['val_improvement_pct']:>15s} {r['train_improvement_pct']:>13s}")
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        with open(args.output, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
    return 0


def write_pso_history(path, history):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PSO_FIELDS)
        for r in history:
            writer.writerow([r.generation, repr(r.best_fitness), repr(r.val_accuracy)])


def cmd_pso(args):
    train, val = _datasets(args)
    train, val = E.prepare_data({"train_subset": args.subset, "val_subset": args.val_subset}, args.seed,
                                (train, val))
    model_cfg = L.ModelConfig(size=args.size, activation=args.activation, seed=E.derived_seed(args.seed, "model"))
    swarm = SwarmConfig(n_particles=args.particles, generations=args.generations, inertia=args.inertia,
                        velocity_clamp=args.velocity_clamp, eval_subset_size=args.eval_subset,
                        seed=E.derived_seed(args.seed, "swarm"))
    best, history = pso_train(swarm, model_cfg, train, val)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = args.name or f"pso_{args.size}_{args.activation}"
    write_pso_history(out / f"{name}.csv", history)
    net = L.build_model(model_cfg)
    net.unflatten(best)
    manifest = {"model": model_cfg.to_dict(), "swarm": swarm.__dict__, "seed": args.seed}
    save_checkpoint(out / f"{name}.actg", net.params, manifest)
    final = history[-1]
    print(f"global best fitness {final.best_fitness:.6f}, validation accuracy {final.val_accuracy:.4f}")
    if args.reference_accuracy is not None:
        ratio = final.val_accuracy / args.reference_accuracy if args.reference_accuracy else float("nan")
        print(f"backprop reference accuracy {args.reference_accuracy:.4f} (swarm/backprop = {ratio:.2f})")
    print(f"history: {out / f'{name}.csv'}")
    return 0


def cmd_gradcheck(args):
    report = G.check_report(args.component, seed=args.seed, draws=args.draws)
    for line in report.lines():
        print(line)
    return 0 if report.passed else 1


def cmd_fetch(args):
    target = _data_dir(args)
    if not target:
        raise UsageError(f"give --data-dir or set {D.DATA_DIR_ENV}")
    path = D.fetch_cifar10(target)
    print(f"CIFAR-10 ready in {path}")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data-dir", default=None, help=f"CIFAR-10 binary directory (default ${D.DATA_DIR_ENV})")
    common.add_argument("--out-dir", default="runs")
    common.add_argument("--seed", type=int, default=0)

    parser = argparse.ArgumentParser(prog="actgrad", description="Train and compare CNNs with trainable activations.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train one CNN variant with RMSProp")
    p.add_argument("--size", choices=tuple(L.SIZES), default="small")
    p.add_argument("--activation", choices=L.ACTIVATIONS, default="relu")
    p.add_argument("--epochs", type=int, default=E.DEFAULT_EPOCHS)
    p.add_argument("--batch-size", type=int, default=E.DEFAULT_BATCH)
    p.add_argument("--lr-scale", type=float, default=1.0)
    p.add_argument("--subset", type=int, default=None, help="stratified training subset size")
    p.add_argument("--val-subset", type=int, default=None, help="stratified validation subset size")
    p.add_argument("--per-channel", action="store_true", help="one activation parameter set per channel")
    p.add_argument("--pretrain-ae", action="store_true", help="layerwise autoencoder pretraining first")
    p.add_argument("--ae-epochs", type=int, default=5)
    p.add_argument("--with-baseline", action="store_true", help="also train the randomly initialised twin")
    p.add_argument("--manifest", default=None, help="replay a run manifest JSON")
    p.add_argument("--name", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", parents=[common], help="improvement table from metrics CSVs")
    p.add_argument("--baseline", required=True)
    p.add_argument("--variant", action="append", required=True, metavar="LABEL=CSV")
    p.add_argument("--label", default="")
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("pso", parents=[common], help="train a CNN by particle swarm search")
    p.add_argument("--size", choices=tuple(L.SIZES), default="middle")
    p.add_argument("--activation", choices=L.ACTIVATIONS, default="relu")
    p.add_argument("--particles", type=int, default=10)
    p.add_argument("--generations", type=int, default=50)
    p.add_argument("--inertia", type=float, default=0.7)
    p.add_argument("--velocity-clamp", type=float, default=0.5)
    p.add_argument("--eval-subset", type=int, default=1000)
    p.add_argument("--subset", type=int, default=None)
    p.add_argument("--val-subset", type=int, default=None)
    p.add_argument("--reference-accuracy", type=float, default=None, help="backprop accuracy to report against")
    p.add_argument("--name", default=None)
    p.set_defaults(func=cmd_pso)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient report")
    p.add_argument("--component", choices=G.COMPONENTS, required=True)
    p.add_argument("--draws", type=int, default=100)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("fetch-data", parents=[common], help="download and verify CIFAR-10 (binary version)")
    p.set_defaults(func=cmd_fetch)
    return parser


def main(argv=None):
    logging.basicConfig(level=os.environ.get("ACTGRAD_LOG", "WARNING"))
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"actgrad: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
