"""Training runs, evaluation, metrics CSVs, run manifests and improvement tables."""

from __future__ import annotations

import csv
import json
import logging
import subprocess
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import layers as L
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, load_cifar10, shuffled_batches, subset
from .optim import RMSProp, lr_schedule
from .pretrain import AePretrainConfig, pretrain_network

log = logging.getLogger(__name__)

CSV_FIELDS = ("epoch", "train_accuracy", "train_loss", "val_accuracy", "val_loss", "wall_seconds")
PRETRAINED_FIELD = "pretrained"
DEFAULT_BATCH = 64
DEFAULT_EPOCHS = 80
EVAL_CHUNK = 25

# The global --seed fans out to per-purpose seeds by these fixed offsets.
SEED_OFFSETS = {
    "model": 0,
    "shuffle": 1,
    "train_subset": 2,
    "val_subset": 3,
    "pretrain": 4,
    "swarm": 5,
}


def derived_seed(seed, purpose):
    return int(seed) + SEED_OFFSETS[purpose]


@dataclass
class MetricsRecord:
    epoch: int
    train_accuracy: float
    train_loss: float
    val_accuracy: float
    val_loss: float
    wall_seconds: float

    def row(self):
        return [str(self.epoch), repr(self.train_accuracy), repr(self.train_loss),
                repr(self.val_accuracy), repr(self.val_loss), f"{self.wall_seconds:.3f}"]


@dataclass
class RunManifest:
    model: dict
    optimizer: dict
    data: dict
    seed: int
    pretrain: dict | None = None
    pretrained_column: bool = False
    git_describe: str = ""
    started: str = ""

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def replay_key(self):
        """Everything that determines the metrics, i.e. the manifest minus provenance."""
        d = self.to_dict()
        d.pop("git_describe")
        d.pop("started")
        return d


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def evaluate(net: L.Network, ds: Dataset, chunk=EVAL_CHUNK):
    """Return ``(accuracy, mean cross-entropy)`` over the whole dataset."""
    probs = net.predict(ds.images, chunk)
    return L.accuracy(probs, ds.labels), L.cross_entropy(probs, ds.one_hot)


def train_epoch(net: L.Network, opt: RMSProp, ds: Dataset, batch_size, lr, seed, epoch):
    """One pass of RMSProp over a fresh seeded permutation; returns the mean batch loss."""
    losses = []
    for images, targets in shuffled_batches(ds, batch_size, seed, epoch):
        probs, cache = net.forward(images)
        loss, dlogits = L.loss_and_grad(probs, targets)
        grads = net.backward(cache, dlogits)
        opt.step(net.params, grads, lr, net.apply_constraints)
        losses.append(loss)
    return float(np.mean(losses))


def write_metrics_csv(path, records, pretrained=None):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = list(CSV_FIELDS) + ([PRETRAINED_FIELD] if pretrained is not None else [])
        writer.writerow(header)
        for r in records:
            writer.writerow(r.row() + ([str(pretrained).lower()] if pretrained is not None else []))


def read_metrics_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [f for f in CSV_FIELDS if f not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        return [
            MetricsRecord(int(row["epoch"]), float(row["train_accuracy"]), float(row["train_loss"]),
                          float(row["val_accuracy"]), float(row["val_loss"]), float(row["wall_seconds"]))
            for row in reader
        ]


@dataclass
class RunResult:
    records: list
    net: L.Network
    best_val_accuracy: float
    manifest: RunManifest
    csv_path: Path | None = None
    checkpoint_path: Path | None = None
    pretrain_history: dict = field(default_factory=dict)


def prepare_data(data: dict, seed, datasets=None):
    """Materialise the train/val datasets a manifest's ``data`` block describes."""
    if datasets is None:
        train, val = load_cifar10(data.get("data_dir"))
    else:
        train, val = datasets
    if data.get("train_subset"):
        train = subset(train, data["train_subset"], derived_seed(seed, "train_subset"))
    if data.get("val_subset"):
        val = subset(val, data["val_subset"], derived_seed(seed, "val_subset"))
    return train, val


def make_manifest(model_cfg: L.ModelConfig, epochs, batch_size, lr_scale, data: dict, seed,
                  pretrain: AePretrainConfig | None = None, pretrained_column=False) -> RunManifest:
    return RunManifest(
        model=model_cfg.to_dict(),
        optimizer={"name": "rmsprop", "rho": RMSProp.rho, "epsilon": RMSProp.epsilon, "epochs": epochs,
                   "batch_size": batch_size, "lr_scale": lr_scale},
        data=dict(data),
        seed=int(seed),
        pretrain=None if pretrain is None else asdict(pretrain),
        pretrained_column=pretrained_column or pretrain is not None,
        git_describe=git_describe(),
        started=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )


def run_training(manifest: RunManifest, out_dir=None, name="run", datasets=None, echo=None) -> RunResult:
    """Execute the run a manifest describes.

    After every epoch the full train and validation sets are evaluated and one
    :class:`MetricsRecord` appended. When ``out_dir`` is given, the metrics CSV,
    manifest JSON and best-validation checkpoint are written there.
    """
    seed = manifest.seed
    opt_cfg = manifest.optimizer
    train, val = prepare_data(manifest.data, seed, datasets)
    net = L.build_model(L.ModelConfig.from_dict(manifest.model))
    pre_hist = {}
    if manifest.pretrain is not None:
        net, pre_hist = pretrain_network(net, train.images, AePretrainConfig(**manifest.pretrain))
    opt = RMSProp(rho=opt_cfg["rho"], epsilon=opt_cfg["epsilon"])
    out = Path(out_dir) if out_dir is not None else None
    csv_path = ckpt_path = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True))
        csv_path, ckpt_path = out / f"{name}.csv", out / f"{name}.actg"
    pretrained = None
    if manifest.pretrained_column or manifest.pretrain is not None:
        pretrained = manifest.pretrain is not None
    records, best = [], -1.0
    start = time.perf_counter()
    for epoch in range(1, opt_cfg["epochs"] + 1):
        lr = lr_schedule(epoch, opt_cfg["lr_scale"])
        train_epoch(net, opt, train, opt_cfg["batch_size"], lr, derived_seed(seed, "shuffle"), epoch)
        tr_acc, tr_loss = evaluate(net, train)
        va_acc, va_loss = evaluate(net, val)
        rec = MetricsRecord(epoch, tr_acc, tr_loss, va_acc, va_loss, time.perf_counter() - start)
        records.append(rec)
        if echo:
            echo(f"epoch {epoch:3d}  lr {lr:.0e}  train acc {tr_acc:.4f} loss {tr_loss:.4f}  "
                 f"val acc {va_acc:.4f} loss {va_loss:.4f}")
        if va_acc > best:
            best = va_acc
            if ckpt_path is not None:
                save_checkpoint(ckpt_path, net.params, manifest.to_dict())
        if csv_path is not None:
            write_metrics_csv(csv_path, records, pretrained)
    return RunResult(records, net, best, manifest, csv_path, ckpt_path, pre_hist)


def restore(path):
    """Rebuild a network from a checkpoint; returns ``(net, manifest)``."""
    manifest, params = load_checkpoint(path)
    net = L.build_model(L.ModelConfig.from_dict(manifest["model"]))
    if params.keys() != net.params.keys():
        raise ValueError(f"{path}: parameter names do not match the manifest's architecture")
    for k, v in params.items():
        if v.shape != net.params[k].shape:
            raise ValueError(f"{path}: {k} has shape {v.shape}, expected {net.params[k].shape}")
        net.params[k] = v
    net.mark_updated()
    return net, RunManifest.from_dict(manifest)


def best_accuracies(records):
    return max(r.val_accuracy for r in records), max(r.train_accuracy for r in records)


def improvement(baseline, variant):
    """Absolute-percentage improvement of the variant's best (val, train) accuracy over the baseline's."""
    bv, bt = best_accuracies(baseline)
    vv, vt = best_accuracies(variant)
    return round((vv - bv) * 100.0, 2), round((vt - bt) * 100.0, 2)


def summary_row(records):
    """Table-style summary: best train accuracy/loss and best validation accuracy/loss."""
    return {
        "train_accuracy": max(r.train_accuracy for r in records),
        "train_loss": min(r.train_loss for r in records),
        "val_accuracy": max(r.val_accuracy for r in records),
        "val_loss": min(r.val_loss for r in records),
    }
