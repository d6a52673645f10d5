import tarfile
from collections import Counter

import numpy as np
import pytest

from actgrad import data as D
from actgrad.errors import ActgradError, DataFormatError


def record(label, pixel):
    return bytes([label]) + bytes([pixel]) * D.PIXELS


def random_records(n, seed):
    r = np.random.default_rng(seed)
    rows = r.integers(0, 256, size=(n, D.RECORD_BYTES), dtype=np.uint8)
    rows[:, 0] = np.arange(n) % 10
    return rows.tobytes()


def test_full_batch_file_size(tmp_path):
    path = tmp_path / "data_batch_1.bin"
    path.write_bytes(random_records(10000, 0))
    assert path.stat().st_size == 30_730_000
    ds = D.load_cifar_binary(path)
    assert ds.images.shape == (10000, 3, 32, 32) and ds.images.dtype == np.float64
    assert ds.class_counts().tolist() == [1000] * 10


def test_label_and_pixel_mapping():
    ds = D.decode_records(record(6, 255), n_records=1)
    assert ds.labels.tolist() == [6]
    assert np.all(ds.images == 1.0)


def test_channel_layout():
    raw = bytearray(record(0, 0))
    raw[1 + 1024 + 5] = 51  # green plane, row 0, column 5
    ds = D.decode_records(bytes(raw), n_records=1)
    assert ds.images[0, 1, 0, 5] == 0.2
    assert ds.images.sum() == 0.2


def test_round_trip_is_byte_identical(tmp_path):
    raw = random_records(2, 1)
    src = tmp_path / "two.bin"
    src.write_bytes(raw)
    ds = D.load_cifar_binary(src, n_records=2)
    out = tmp_path / "again.bin"
    D.write_cifar_binary(ds, out)
    assert out.read_bytes() == raw


def test_wrong_length_reports_counts():
    with pytest.raises(DataFormatError) as err:
        D.decode_records(record(1, 0)[:-1], n_records=1)
    assert err.value.expected == D.RECORD_BYTES and err.value.actual == D.RECORD_BYTES - 1


def test_bad_label_reports_record():
    with pytest.raises(DataFormatError) as err:
        D.decode_records(record(3, 0) + record(10, 0), n_records=2)
    assert err.value.record == 1


def test_merged_batches_count():
    labels = np.arange(50000) % 10
    ds = D.Dataset(np.zeros((50000, 1, 1, 1)), labels)
    sizes = [len(y) for _, y in D.shuffled_batches(ds, 64, seed=0)]
    assert len(sizes) == 782 == D.n_batches(50000, 64)
    assert sizes[:-1] == [64] * 781 and sizes[-1] == 16


def test_merge_shuffle_batch_is_a_permutation():
    parts = [D.Dataset(np.arange(30, dtype=float).reshape(10, 3, 1, 1) + 100 * k, np.arange(10) % 10)
             for k in range(3)]
    first = list(D.merge_shuffle_batch(parts, 7, seed=5))
    again = list(D.merge_shuffle_batch(parts, 7, seed=5))
    assert all(np.array_equal(a[0], b[0]) for a, b in zip(first, again))
    seen = np.concatenate([x[:, 0, 0, 0] for x, _ in first])
    expected = np.concatenate([p.images[:, 0, 0, 0] for p in parts])
    assert sorted(seen) == sorted(expected)
    labels = Counter(np.concatenate([y.argmax(1) for _, y in first]).tolist())
    assert labels == Counter(np.concatenate([p.labels for p in parts]).tolist())
    other = list(D.merge_shuffle_batch(parts, 7, seed=5, epoch=1))
    assert not np.array_equal(first[0][0], other[0][0])


def test_batch_size_must_be_positive():
    with pytest.raises(ActgradError):
        next(D.shuffled_batches(D.Dataset(np.zeros((2, 1, 1, 1)), np.zeros(2, int)), 0, seed=0))


def test_stratified_subset():
    labels = np.repeat(np.arange(10), 500)
    ds = D.Dataset(np.arange(5000, dtype=float).reshape(-1, 1, 1, 1), labels)
    sub = D.subset(ds, 1000, seed=3)
    assert sub.class_counts().tolist() == [100] * 10
    assert np.array_equal(D.subset_indices(labels, 1000, 3), D.subset_indices(labels, 1000, 3))
    odd = D.subset(ds, 1003, seed=3).class_counts().tolist()
    assert odd == [101, 101, 101] + [100] * 7
    full = D.subset(ds, 5000, seed=3)
    assert sorted(full.images.ravel()) == sorted(ds.images.ravel())
    with pytest.raises(ActgradError):
        D.subset(ds, 0, seed=3)
    with pytest.raises(ActgradError):
        D.subset(ds, 5001, seed=3)


def fake_tree(root):
    root.mkdir(parents=True, exist_ok=True)
    for k, name in enumerate(D.TRAIN_FILES + (D.TEST_FILE,)):
        (root / name).write_bytes(random_records(10000, k))


def test_resolve_nested_directory(tmp_path, monkeypatch):
    fake_tree(tmp_path / "cifar-10-batches-bin")
    assert D.resolve_data_dir(tmp_path) == tmp_path / "cifar-10-batches-bin"
    monkeypatch.setenv(D.DATA_DIR_ENV, str(tmp_path))
    assert D.resolve_data_dir() == tmp_path / "cifar-10-batches-bin"
    with pytest.raises(FileNotFoundError):
        D.resolve_data_dir(tmp_path / "nowhere")


def test_fetch_verifies_checksum(tmp_path):
    src = tmp_path / "src"
    fake_tree(src / "cifar-10-batches-bin")
    archive = tmp_path / "cifar-10-binary.tar.gz"
    with tarfile.open(archive, "w:gz") as tar:
        tar.add(src / "cifar-10-batches-bin", arcname="cifar-10-batches-bin")
    digest = D.md5sum(archive)
    out = D.fetch_cifar10(tmp_path / "dest", url=archive.as_uri(), md5=digest)
    assert (out / D.TEST_FILE).stat().st_size == 30_730_000
    with pytest.raises(DataFormatError):
        D.fetch_cifar10(tmp_path / "dest2", url=archive.as_uri(), md5="0" * 32)


def test_official_archive_checksum_constant():
    assert D.ARCHIVE_MD5 == "c32a1d4ab5d03f1284b67883e8d87530"
    assert D.ARCHIVE_URL.endswith("cifar-10-binary.tar.gz")
