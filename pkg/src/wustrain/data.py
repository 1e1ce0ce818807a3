"""Dataset ingestion and seeded minibatching.

Supported sources: CIFAR-10 binary batches (3073-byte records: one label byte
then 3072 pixel bytes, R/G/B planes), IDX image/label pairs, and synthetic
class-conditional Gaussian blobs for fast deterministic tests. Pixels are
scaled by 1/255; no augmentation, no mean/std normalization.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError

CIFAR_RECORD_BYTES = 3073
CIFAR_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST_FILE = "test_batch.bin"
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    images: np.ndarray       # N x C x H x W, float32 in [0, 1]
    labels: np.ndarray       # N int64 class indices
    class_count: int

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DataFormatError(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )
        if len(self.labels) and (self.labels.min() < 0
                                 or self.labels.max() >= self.class_count):
            raise DataFormatError(
                f"labels must lie in [0, {self.class_count}), "
                f"got range [{self.labels.min()}, {self.labels.max()}]"
            )

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, n: int) -> "Dataset":
        return Dataset(self.images[:n], self.labels[:n], self.class_count)


def _decode_cifar_file(path: Path, scale: bool = True) -> tuple:
    if not path.is_file():
        raise DataFormatError(f"missing CIFAR batch file: {path}", path=path)
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % CIFAR_RECORD_BYTES != 0:
        offset = raw.size - raw.size % CIFAR_RECORD_BYTES
        raise DataFormatError(
            f"{path.name}: truncated record at byte {offset} "
            f"(file holds {raw.size} bytes, records are {CIFAR_RECORD_BYTES})",
            path=path, offset=offset,
        )
    records = raw.reshape(-1, CIFAR_RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    bad = np.nonzero(labels > 9)[0]
    if bad.size:
        offset = int(bad[0]) * CIFAR_RECORD_BYTES
        raise DataFormatError(
            f"{path.name}: label {labels[bad[0]]} > 9 at byte {offset}",
            path=path, offset=offset,
        )
    images = records[:, 1:].reshape(-1, 3, 32, 32)
    if scale:
        images = images / np.float32(255.0)   # uint8 / f32 scalar -> f32 array
    else:
        images = images.astype(np.float32)
    return images, labels


def load_cifar10(dir_path, scale: bool = True) -> tuple:
    """Load the six standard binary batches; returns (train, val) datasets."""
    root = Path(dir_path)
    if not (root / CIFAR_TRAIN_FILES[0]).is_file() and \
            (root / "cifar-10-batches-bin" / CIFAR_TRAIN_FILES[0]).is_file():
        root = root / "cifar-10-batches-bin"
    train_parts = [_decode_cifar_file(root / name, scale) for name in CIFAR_TRAIN_FILES]
    train = Dataset(
        np.concatenate([p[0] for p in train_parts]),
        np.concatenate([p[1] for p in train_parts]),
        class_count=10,
    )
    val_images, val_labels = _decode_cifar_file(root / CIFAR_TEST_FILE, scale)
    return train, Dataset(val_images, val_labels, class_count=10)


def encode_cifar_record(dataset: Dataset, index: int) -> bytes:
    """Re-encode one sample into the 3073-byte on-disk record."""
    pixels = np.round(dataset.images[index] * 255.0).astype(np.uint8)
    return bytes([int(dataset.labels[index])]) + pixels.tobytes()


def write_cifar_batch(path, images_u8: np.ndarray, labels: np.ndarray) -> None:
    """Write uint8 images [N,3,32,32] and labels into one binary batch file."""
    records = np.empty((len(labels), CIFAR_RECORD_BYTES), dtype=np.uint8)
    records[:, 0] = labels
    records[:, 1:] = images_u8.reshape(len(labels), -1)
    records.tofile(path)


def _read_idx(path: Path, expected_magic: int) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DataFormatError(f"missing IDX file: {path}", path=path)
    data = path.read_bytes()
    if len(data) < 4:
        raise DataFormatError(f"{path.name}: empty or headerless IDX file", path=path)
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic != expected_magic:
        raise DataFormatError(
            f"{path.name}: bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}",
            path=path, offset=0,
        )
    rank = magic & 0xFF
    header = 4 + 4 * rank
    if len(data) < header:
        raise DataFormatError(f"{path.name}: truncated IDX header", path=path, offset=len(data))
    dims = struct.unpack_from(f">{rank}I", data, 4)
    count = int(np.prod(dims))
    if len(data) - header != count:
        raise DataFormatError(
            f"{path.name}: payload holds {len(data) - header} bytes, dims {dims} need {count}",
            path=path, offset=header,
        )
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label pair as 1-channel images scaled to [0, 1]."""
    images = _read_idx(Path(images_path), IDX_IMAGES_MAGIC)
    labels = _read_idx(Path(labels_path), IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"{images.shape[0]} images but {labels.shape[0]} labels",
            path=images_path,
        )
    n, h, w = images.shape
    scaled = (images.reshape(n, 1, h, w) / np.float32(255.0)).astype(np.float32)
    class_count = int(labels.max()) + 1 if n else 0
    return Dataset(scaled, labels.astype(np.int64), class_count)


def synthetic_dataset(seed: int, n: int, classes: int, shape: tuple) -> Dataset:
    """Class-conditional Gaussian blobs in pixel space, deterministic in seed."""
    if n < classes:
        raise DataFormatError(f"need at least one sample per class: n={n} < classes={classes}")
    rng = np.random.default_rng(seed)
    shape = tuple(shape)
    means = rng.uniform(0.25, 0.75, (classes,) + shape)
    labels = (np.arange(n) % classes).astype(np.int64)
    noise = rng.normal(0.0, 0.08, (n,) + shape)
    images = np.clip(means[labels] + noise, 0.0, 1.0).astype(np.float32)
    return Dataset(images, labels, classes)


@dataclass(frozen=True)
class BatchPlan:
    """Seeded, epoch-indexed shuffling; (seed, epoch) fully determine an epoch."""

    seed: int
    batch_size: int = 128

    def permutation(self, epoch: int, n: int) -> np.ndarray:
        rng = np.random.default_rng([self.seed, epoch])
        return rng.permutation(n)


def batches(dataset: Dataset, plan: BatchPlan, epoch: int):
    """Yield (images, labels) minibatches covering one shuffled epoch."""
    if epoch < 0:
        raise DataFormatError(f"epoch must be >= 0, got {epoch}")
    order = plan.permutation(epoch, len(dataset))
    for start in range(0, len(dataset), plan.batch_size):
        idx = order[start:start + plan.batch_size]
        yield dataset.images[idx], dataset.labels[idx]
