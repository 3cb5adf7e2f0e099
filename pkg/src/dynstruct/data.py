"""Datasets: MNIST IDX files, a synthetic relevant-feature task, mini-batches."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .masked_net import Batch

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049


@dataclass(frozen=True, eq=False)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        if len(self.inputs) != len(self.labels):
            raise ValueError(f"{len(self.inputs)} inputs but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError("labels outside [0, n_classes)")

    def __len__(self):
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.inputs.shape[1]

    def subset(self, n: int) -> Dataset:
        """The first ``n`` samples."""
        return Dataset(self.inputs[:n], self.labels[:n], self.n_classes)


def _read_bytes(path) -> bytes:
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    with opener(path, "rb") as f:
        return f.read()


def _parse_idx(raw: bytes, magic: int, ndim: int, path) -> np.ndarray:
    header_len = 4 * (1 + ndim)
    if len(raw) < header_len:
        raise FormatError(f"{path}: truncated header")
    found, *dims = struct.unpack(f">{1 + ndim}i", raw[:header_len])
    if found != magic:
        raise FormatError(f"{path}: magic number {found}, expected {magic}")
    size = int(np.prod(dims))
    body = raw[header_len:]
    if len(body) < size:
        raise FormatError(f"{path}: truncated, expected {size} bytes of data, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8, count=size).reshape(dims)


def load_mnist_idx(image_path, label_path) -> Dataset:
    """Read an IDX image/label pair (optionally gzipped); pixels scaled to [0, 1]."""
    images = _parse_idx(_read_bytes(image_path), IMAGE_MAGIC, 3, image_path)
    labels = _parse_idx(_read_bytes(label_path), LABEL_MAGIC, 1, label_path)
    if len(images) != len(labels):
        raise FormatError(f"{len(images)} images but {len(labels)} labels")
    inputs = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return Dataset(inputs, labels.astype(np.int64), 10)


def write_idx_images(path, images) -> None:
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    _write(path, struct.pack(">4i", IMAGE_MAGIC, n, rows, cols) + images.tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    _write(path, struct.pack(">2i", LABEL_MAGIC, len(labels)) + labels.tobytes())


def _write(path, payload: bytes) -> None:
    path = Path(path)
    if path.suffix == ".gz":
        # mtime=0 keeps the archive byte-stable across rebuilds
        with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
            f.write(payload)
    else:
        path.write_bytes(payload)


def synthetic_subset_task(d_relevant: int, d_noise: int, n: int, rng: np.random.Generator,
                          margin: float = 0.5) -> Dataset:
    """Binary task whose label depends only on the first ``d_relevant`` features.

    Relevant features are uniform on [0, 1] and the label is the sign of the
    standardized score ``(mean - 0.5) * sqrt(12 * d_relevant)``.  Samples with
    ``|score| < margin`` are redrawn, so the classes are separated by a gap.
    The trailing ``d_noise`` features are independent uniform noise.
    """
    if d_relevant < 1 or d_noise < 0 or n < 1:
        raise ValueError("sizes must be positive")
    if not 0 <= margin < 2:
        raise ValueError("margin must be in [0, 2)")
    rows = []
    need = n
    while need:
        cand = rng.random((max(2 * need, 16), d_relevant))
        keep = cand[np.abs(relevance_score(cand)) >= margin][:need]
        rows.append(keep)
        need -= len(keep)
    relevant = np.concatenate(rows)
    labels = (relevance_score(relevant) > 0).astype(np.int64)
    noise = rng.random((n, d_noise))
    return Dataset(np.concatenate([relevant, noise], axis=1), labels, 2)


def relevance_score(relevant_features) -> np.ndarray:
    x = np.asarray(relevant_features)
    return (x.mean(axis=1) - 0.5) * np.sqrt(12 * x.shape[1])


def minibatch_iterator(dataset: Dataset, batch_size: int, seed):
    """One shuffled pass over ``dataset``; the final partial batch is kept."""
    if batch_size < 1:
        raise ValueError("batch size must be >= 1")
    order = np.random.default_rng(seed).permutation(len(dataset))
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        yield Batch(dataset.inputs[idx], dataset.labels[idx])
