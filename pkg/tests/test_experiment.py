import numpy as np
import pytest

from actgrad import experiment as E
from actgrad import layers as L

from conftest import learnable

# best (training, validation) accuracy per model
BEST = {
    ("small", "relu"): (0.6789, 0.5914), ("small", "fourier"): (0.7077, 0.6423), ("small", "lc"): (0.6910, 0.6337),
    ("middle", "relu"): (0.8355, 0.6368), ("middle", "fourier"): (0.7866, 0.6738), ("middle", "lc"): (0.8231, 0.6532),
    ("large", "relu"): (0.9578, 0.6474), ("large", "fourier"): (0.9421, 0.6601), ("large", "lc"): (0.9583, 0.6791),
}
# (validation, training) improvement in absolute percent
IMPROVEMENT = {
    ("small", "fourier"): (5.09, 2.88), ("small", "lc"): (4.23, 1.21),
    ("middle", "fourier"): (3.70, -4.89), ("middle", "lc"): (1.64, -1.24),
    ("large", "fourier"): (1.27, -1.57), ("large", "lc"): (3.17, 0.05),
}


def records(train, val):
    return [E.MetricsRecord(1, train - 0.1, 2.0, val - 0.1, 2.0, 1.0), E.MetricsRecord(2, train, 1.0, val, 1.5, 2.0)]


@pytest.mark.parametrize("key", sorted(IMPROVEMENT))
def test_improvement_table(key):
    size, _ = key
    base = records(*BEST[(size, "relu")])
    assert E.improvement(base, records(*BEST[key])) == IMPROVEMENT[key]


def test_identical_runs_improve_by_zero():
    r = records(0.5, 0.4)
    assert E.improvement(r, r) == (0.0, 0.0)


def test_metrics_csv_round_trip(tmp_path):
    recs = [E.MetricsRecord(1, 0.25, 2.1, 0.2, 2.2, 3.14159), E.MetricsRecord(2, 1 / 3, 1.9, 0.3, 2.0, 6.5)]
    path = tmp_path / "m.csv"
    E.write_metrics_csv(path, recs)
    back = E.read_metrics_csv(path)
    assert back[1].train_accuracy == 1 / 3 and back[0].wall_seconds == 3.142
    assert path.read_text().splitlines()[0] == ",".join(E.CSV_FIELDS)
    E.write_metrics_csv(path, recs, pretrained=True)
    assert path.read_text().splitlines()[0].endswith(",pretrained")
    assert E.read_metrics_csv(path)[0].epoch == 1


def test_seed_offsets():
    assert [E.derived_seed(10, k) for k in E.SEED_OFFSETS] == [10, 11, 12, 13, 14, 15]


def test_run_learns_and_restores(tmp_path):
    train, val = learnable(300, seed=21), learnable(150, seed=22)
    cfg = L.ModelConfig("small", "relu", seed=1)
    manifest = E.make_manifest(cfg, 3, 32, 1.0, {"train_subset": None, "val_subset": None}, seed=1)
    result = E.run_training(manifest, tmp_path, "r", datasets=(train, val))
    assert len(result.records) == 3
    assert result.best_val_accuracy > 0.3
    net, back = E.restore(result.checkpoint_path)
    assert back.replay_key() == manifest.replay_key()
    acc, _ = E.evaluate(net, val)
    assert acc == result.best_val_accuracy


@pytest.mark.parametrize("activation", ["fourier", "lc"])
def test_trainable_activations_learn(activation):
    train, val = learnable(300, seed=31), learnable(150, seed=32)
    cfg = L.ModelConfig("small", activation, seed=2)
    manifest = E.make_manifest(cfg, 3, 32, 1.0, {}, seed=2)
    result = E.run_training(manifest, None, datasets=(train, val))
    assert result.best_val_accuracy > 0.3
    assert result.csv_path is None


def test_summary_row():
    recs = [E.MetricsRecord(1, 0.5, 1.5, 0.4, 1.7, 1.0), E.MetricsRecord(2, 0.6, 1.6, 0.35, 1.6, 2.0)]
    assert E.summary_row(recs) == {"train_accuracy": 0.6, "train_loss": 1.5, "val_accuracy": 0.4, "val_loss": 1.6}
