"""CIFAR-10 binary-format ingestion, merging, shuffling, batching and stratified subsets."""

from __future__ import annotations

import hashlib
import logging
import os
import tarfile
import urllib.request
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ActgradError, DataFormatError

log = logging.getLogger(__name__)

N_CLASSES = 10
IMAGE_SHAPE = (3, 32, 32)
PIXELS = 3 * 32 * 32
RECORD_BYTES = 1 + PIXELS
RECORDS_PER_FILE = 10000
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILE = "test_batch.bin"
ARCHIVE_URL = "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz"
ARCHIVE_MD5 = "c32a1d4ab5d03f1284b67883e8d87530"
DATA_DIR_ENV = "ACTGRAD_DATA_DIR"


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (N, 3, 32, 32) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64 in 0..9

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise ActgradError(f"{self.images.shape[0]} images but {self.labels.shape[0]} labels")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def one_hot(self) -> np.ndarray:
        return one_hot(self.labels)

    def take(self, index) -> "Dataset":
        return Dataset(self.images[index], self.labels[index])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=N_CLASSES)


def one_hot(labels, n_classes=N_CLASSES) -> np.ndarray:
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def decode_records(raw: bytes, n_records=RECORDS_PER_FILE, source="<bytes>") -> Dataset:
    """Decode ``label byte + 3072 pixel bytes`` records. ``n_records=None`` accepts any count."""
    size = len(raw)
    if n_records is None:
        if size == 0 or size % RECORD_BYTES:
            raise DataFormatError(
                f"{source}: {size} bytes is not a positive multiple of the {RECORD_BYTES}-byte record",
                expected=RECORD_BYTES, actual=size,
            )
    elif size != n_records * RECORD_BYTES:
        raise DataFormatError(
            f"{source}: expected {n_records * RECORD_BYTES} bytes, found {size}",
            expected=n_records * RECORD_BYTES, actual=size,
        )
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    bad = np.flatnonzero(labels >= N_CLASSES)
    if bad.size:
        i = int(bad[0])
        raise DataFormatError(f"{source}: record {i} has label byte {labels[i]}", record=i, actual=int(labels[i]))
    images = records[:, 1:].reshape((-1,) + IMAGE_SHAPE).astype(np.float64) / 255.0
    return Dataset(images, labels)


def load_cifar_binary(path, n_records=RECORDS_PER_FILE) -> Dataset:
    path = Path(path)
    return decode_records(path.read_bytes(), n_records, source=str(path))


def encode_records(ds: Dataset) -> bytes:
    pixels = np.rint(ds.images.reshape(len(ds), PIXELS) * 255.0).astype(np.uint8)
    records = np.concatenate([ds.labels.astype(np.uint8)[:, None], pixels], axis=1)
    return records.tobytes()


def write_cifar_binary(ds: Dataset, path):
    Path(path).write_bytes(encode_records(ds))


def merge(datasets) -> Dataset:
    datasets = list(datasets)
    if not datasets:
        raise ActgradError("nothing to merge")
    return Dataset(np.concatenate([d.images for d in datasets]), np.concatenate([d.labels for d in datasets]))


def resolve_data_dir(data_dir=None) -> Path:
    if data_dir is None:
        data_dir = os.environ.get(DATA_DIR_ENV)
    if data_dir is None:
        raise FileNotFoundError(f"no data directory given and {DATA_DIR_ENV} is unset")
    data_dir = Path(data_dir)
    nested = data_dir / "cifar-10-batches-bin"
    if not (data_dir / TEST_FILE).exists() and (nested / TEST_FILE).exists():
        data_dir = nested
    missing = [f for f in TRAIN_FILES + (TEST_FILE,) if not (data_dir / f).exists()]
    if missing:
        raise FileNotFoundError(f"{data_dir} is missing CIFAR-10 files: {', '.join(missing)}")
    return data_dir


def load_cifar10(data_dir=None):
    """Return ``(train, test)``: the five training batches merged, and the test batch."""
    data_dir = resolve_data_dir(data_dir)
    train = merge(load_cifar_binary(data_dir / f) for f in TRAIN_FILES)
    test = load_cifar_binary(data_dir / TEST_FILE)
    return train, test


def batch_order(n, seed, epoch=0) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def shuffled_batches(ds: Dataset, batch_size, seed, epoch=0):
    """Yield ``(images, one_hot_labels)`` batches from one seeded permutation; the last may be short."""
    if batch_size < 1:
        raise ActgradError(f"batch size must be >= 1, got {batch_size}")
    order = batch_order(len(ds), seed, epoch)
    for start in range(0, len(ds), batch_size):
        idx = order[start:start + batch_size]
        yield ds.images[idx], one_hot(ds.labels[idx])


def merge_shuffle_batch(datasets, batch_size, seed, epoch=0):
    return shuffled_batches(merge(datasets), batch_size, seed, epoch)


def n_batches(n, batch_size):
    return -(-n // batch_size)


def subset_indices(labels, n, seed) -> np.ndarray:
    total = len(labels)
    if not 1 <= n <= total:
        raise ActgradError(f"subset size must be in [1, {total}], got {n}")
    if n == total:
        return np.arange(total)
    rng = np.random.default_rng(seed)
    base, extra = divmod(n, N_CLASSES)
    picked = []
    for c in range(N_CLASSES):
        want = base + (1 if c < extra else 0)
        pool = np.flatnonzero(labels == c)
        if want > pool.size:
            raise ActgradError(f"class {c} has {pool.size} samples, {want} requested")
        picked.append(rng.choice(pool, size=want, replace=False))
    return np.sort(np.concatenate(picked))


def subset(ds: Dataset, n, seed) -> Dataset:
    """Class-stratified sample: n // 10 per class, remainder to the lowest class indices."""
    return ds.take(subset_indices(ds.labels, n, seed))


def md5sum(path, chunk=1 << 20) -> str:
    h = hashlib.md5()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(chunk), b""):
            h.update(block)
    return h.hexdigest()


def fetch_cifar10(data_dir, url=ARCHIVE_URL, md5=ARCHIVE_MD5) -> Path:
    """Download the binary archive, verify its MD5 and unpack it into ``data_dir``."""
    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    archive = data_dir / Path(url).name
    if not archive.exists():
        log.info("downloading %s", url)
        urllib.request.urlretrieve(url, archive)
    digest = md5sum(archive)
    if digest != md5:
        raise DataFormatError(f"{archive}: md5 {digest} != expected {md5}", expected=md5, actual=digest)
    with tarfile.open(archive, "r:gz") as tar:
        tar.extractall(data_dir)
    return resolve_data_dir(data_dir)
