"""CIFAR-10/100 binary readers, colour normalization, augmentation and batching.

Binary records are one label byte (CIFAR-10) or coarse+fine label bytes
(CIFAR-100) followed by 3072 pixel bytes: the R, G and B planes, each 32x32
row-major.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from eluresnet.ops import pad_crop_flip
from eluresnet.tensor import Rng

IMAGE_SHAPE = (3, 32, 32)
PIXELS = 3 * 32 * 32
PAD = 4
CROP = 32

CIFAR10_TRAIN = [f"data_batch_{i}.bin" for i in range(1, 6)]
CIFAR10_TEST = ["test_batch.bin"]
CIFAR100_TRAIN = ["train.bin"]
CIFAR100_TEST = ["test.bin"]
DATA_DIR_ENV = "CIFAR_DATA_DIR"


class DatasetFormatError(ValueError):
    pass


@dataclass
class LabeledImageSet:
    images: np.ndarray  # (N, 3, 32, 32) float32
    labels: np.ndarray  # (N,) int64
    class_count: int

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, limit: int | None) -> "LabeledImageSet":
        if limit is None or limit >= len(self):
            return self
        return replace(self, images=self.images[:limit], labels=self.labels[:limit])


@dataclass
class NormalizationStats:
    mean: np.ndarray  # (3,)
    std: np.ndarray  # (3,)


def parse_records(raw: bytes, label_bytes: int, label_offset: int, class_count: int,
                  source: str = "<bytes>"):
    """Decode a CIFAR binary blob into uint8 images and int labels."""
    record = label_bytes + PIXELS
    if len(raw) == 0 or len(raw) % record:
        raise DatasetFormatError(f"{source}: size {len(raw)} is not a multiple of {record}")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record)
    labels = arr[:, label_offset].astype(np.int64)
    if labels.max() >= class_count:
        raise DatasetFormatError(f"{source}: label {labels.max()} outside [0, {class_count})")
    images = arr[:, label_bytes:].reshape(-1, *IMAGE_SHAPE)
    return images, labels


def _resolve_dir(directory, subdir: str, first_file: str) -> Path:
    if directory is None:
        directory = os.environ.get(DATA_DIR_ENV)
        if directory is None:
            raise FileNotFoundError(f"no data directory given and ${DATA_DIR_ENV} is unset")
    d = Path(directory)
    if not (d / first_file).exists() and (d / subdir / first_file).exists():
        d = d / subdir
    return d


def _load(d: Path, names, label_bytes, label_offset, class_count) -> LabeledImageSet:
    images, labels = [], []
    for name in names:
        path = d / name
        if not path.exists():
            raise FileNotFoundError(f"missing CIFAR file {path}")
        im, lb = parse_records(path.read_bytes(), label_bytes, label_offset, class_count, str(path))
        images.append(im)
        labels.append(lb)
    ims = np.concatenate(images)
    # promote bytes to [0, 1] reals
    return LabeledImageSet(ims.astype(np.float32) / np.float32(255.0),
                           np.concatenate(labels), class_count)


def load_cifar10(directory=None) -> tuple[LabeledImageSet, LabeledImageSet]:
    d = _resolve_dir(directory, "cifar-10-batches-bin", CIFAR10_TRAIN[0])
    return (_load(d, CIFAR10_TRAIN, 1, 0, 10), _load(d, CIFAR10_TEST, 1, 0, 10))


def load_cifar100(directory=None) -> tuple[LabeledImageSet, LabeledImageSet]:
    """Fine labels (second byte of each record) are used; coarse labels are dropped."""
    d = _resolve_dir(directory, "cifar-100-binary", CIFAR100_TRAIN[0])
    return (_load(d, CIFAR100_TRAIN, 2, 1, 100), _load(d, CIFAR100_TEST, 2, 1, 100))


def load_dataset(name: str, directory=None):
    loaders = {"cifar10": load_cifar10, "cifar100": load_cifar100}
    if name not in loaders:
        raise ValueError(f"unknown dataset {name!r}")
    return loaders[name](directory)


def write_records(path, images: np.ndarray, labels, coarse_labels=None) -> None:
    """Write uint8 images (N, 3, 32, 32) in the CIFAR binary layout."""
    images = np.asarray(images, dtype=np.uint8).reshape(len(labels), PIXELS)
    heads = [np.asarray(labels, dtype=np.uint8)[:, None]]
    if coarse_labels is not None:
        heads.insert(0, np.asarray(coarse_labels, dtype=np.uint8)[:, None])
    Path(path).write_bytes(np.concatenate(heads + [images], axis=1).tobytes())


def compute_normalization(train: LabeledImageSet, use_std: bool = True) -> NormalizationStats:
    if len(train) < 2:
        raise ValueError("need at least 2 images to estimate normalization")
    x = train.images.astype(np.float64)
    mean = x.mean(axis=(0, 2, 3))
    std = x.std(axis=(0, 2, 3))
    if np.any(std == 0):
        raise ValueError(f"zero-variance channel in training set (std={std})")
    if not use_std:
        std = np.ones(3)
    return NormalizationStats(mean, std)


def apply_normalization(images: LabeledImageSet, stats: NormalizationStats) -> LabeledImageSet:
    x = (images.images - stats.mean.reshape(1, 3, 1, 1)) / stats.std.reshape(1, 3, 1, 1)
    return replace(images, images=x.astype(np.float32))


def draw_augmentation(n: int, rng: Rng):
    """Per-image crop offsets (rows, cols) in [0, 2*PAD] and horizontal-flip flags."""
    offsets = rng.integers(0, 2 * PAD + 1, size=(n, 2))
    flips = rng.random(n) < 0.5
    return offsets, flips


def augment_batch(batch: np.ndarray, rng: Rng) -> np.ndarray:
    """Pad 4 zero pixels per side, take a random 32x32 crop, mirror with probability 1/2."""
    offsets, flips = draw_augmentation(len(batch), rng)
    return apply_augmentation(batch, offsets, flips)


def apply_augmentation(batch: np.ndarray, offsets, flips) -> np.ndarray:
    out = np.empty_like(batch)
    crop = batch.shape[2]
    for i in range(len(batch)):
        out[i] = pad_crop_flip(batch[i:i + 1], PAD, crop, bool(flips[i]),
                               (int(offsets[i][0]), int(offsets[i][1])))[0]
    return out


def batch_iterator(data: LabeledImageSet, batch_size: int, shuffle: bool, rng: Rng | None = None):
    """Yield ``(images, labels)`` batches; the final short batch is kept."""
    if batch_size < 1:
        raise ValueError("batch size must be at least 1")
    n = len(data)
    order = rng.permutation(n) if shuffle else np.arange(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        yield data.images[idx], data.labels[idx]
