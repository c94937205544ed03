"""Dataset ingestion and batching.

Binary layouts handled bit-exactly:

* CIFAR-10: concatenated 3073-byte records, [label][1024 R][1024 G][1024 B],
  planes row-major 32x32.
* STL-10: 27648-byte images, three 9216-byte planes (R,G,B), each plane
  column-major 96x96 (transposed to row-major on load); optional label file
  of single bytes 1..10, remapped to 0..9.

Pixels are scaled to [0,1] at load; standardization happens later in the
pipeline. Loaders keep file order.
"""

import os
from dataclasses import dataclass

import numpy as np

from zbcae.errors import FormatError

CIFAR_RECORD = 3073
CIFAR_DIM = 32
STL_DIM = 96
STL_IMAGE = 3 * STL_DIM * STL_DIM


@dataclass(eq=False)
class LabeledDataset:
    images: np.ndarray  # (n, 3, h, w) float32 in [0,1]
    labels: np.ndarray  # (n,) int64 in [0, num_classes)
    num_classes: int

    def __len__(self):
        return self.images.shape[0]


@dataclass(eq=False)
class UnlabeledDataset:
    images: np.ndarray

    def __len__(self):
        return self.images.shape[0]


def read_cifar10(paths):
    """Load one or more CIFAR-10 binary batch files, concatenated in order."""
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    chunks, labels = [], []
    for path in paths:
        raw = np.fromfile(path, np.uint8)
        if raw.size % CIFAR_RECORD != 0:
            raise FormatError(
                f"{path}: size {raw.size} is not a multiple of {CIFAR_RECORD}-byte records"
            )
        rec = raw.reshape(-1, CIFAR_RECORD)
        lab = rec[:, 0]
        if lab.size and lab.max() > 9:
            raise FormatError(f"{path}: label byte {lab.max()} out of range 0..9")
        labels.append(lab.astype(np.int64))
        chunks.append(
            rec[:, 1:].reshape(-1, 3, CIFAR_DIM, CIFAR_DIM).astype(np.float32) / 255.0
        )
    if not chunks:
        return LabeledDataset(
            np.zeros((0, 3, CIFAR_DIM, CIFAR_DIM), np.float32), np.zeros(0, np.int64), 10
        )
    return LabeledDataset(np.concatenate(chunks), np.concatenate(labels), 10)


def write_cifar10(path, images, labels):
    """Write a CIFAR-10-format fixture; images are (n,3,32,32) floats in [0,1]."""
    images = np.asarray(images)
    labels = np.asarray(labels)
    n = images.shape[0]
    rec = np.empty((n, CIFAR_RECORD), np.uint8)
    rec[:, 0] = labels.astype(np.uint8)
    pix = np.clip(np.round(images * 255.0), 0, 255).astype(np.uint8)
    rec[:, 1:] = pix.reshape(n, 3 * CIFAR_DIM * CIFAR_DIM)
    rec.tofile(path)


def read_stl10(path, labels_path=None):
    """Load an STL-10 binary image file; labeled when a label file is given."""
    raw = np.fromfile(path, np.uint8)
    if raw.size % STL_IMAGE != 0:
        raise FormatError(
            f"{path}: size {raw.size} is not a multiple of {STL_IMAGE} bytes per image"
        )
    n = raw.size // STL_IMAGE
    planes = raw.reshape(n, 3, STL_DIM, STL_DIM)  # column-major planes
    images = planes.transpose(0, 1, 3, 2).astype(np.float32) / 255.0
    if labels_path is None:
        return UnlabeledDataset(images)
    lab = np.fromfile(labels_path, np.uint8)
    if lab.size != n:
        raise FormatError(
            f"{labels_path}: {lab.size} labels for {n} images"
        )
    if lab.size and (lab.min() < 1 or lab.max() > 10):
        raise FormatError(f"{labels_path}: labels must lie in 1..10")
    return LabeledDataset(images, lab.astype(np.int64) - 1, 10)


def sample_subset(ds, samples_per_class, seed):
    """Class-balanced subset without replacement, order shuffled, seed-exact."""
    rng = np.random.default_rng(seed)
    picked = []
    for k in range(ds.num_classes):
        idx = np.flatnonzero(ds.labels == k)
        if idx.size < samples_per_class:
            raise ValueError(
                f"class {k} has {idx.size} examples, need {samples_per_class}"
            )
        picked.append(rng.choice(idx, samples_per_class, replace=False))
    order = np.concatenate(picked)
    rng.shuffle(order)
    return LabeledDataset(ds.images[order], ds.labels[order], ds.num_classes)


def batch_indices(n, batch_size, seed, epoch):
    """Epoch-seeded shuffled batches; the final short batch is kept."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    entropy = [*seed, epoch] if isinstance(seed, (list, tuple)) else [seed, epoch]
    order = np.random.default_rng(entropy).permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def make_batches(ds, batch_size, seed, epoch):
    """Yield image batches (and label batches for labeled datasets)."""
    labeled = isinstance(ds, LabeledDataset)
    for idx in batch_indices(len(ds), batch_size, seed, epoch):
        if labeled:
            yield ds.images[idx], ds.labels[idx]
        else:
            yield ds.images[idx]


def make_synthetic(kind, n, dims, seed, num_classes=2):
    """Deterministic toy datasets for desk-scale training checks.

    kinds: 'constant' (each image one flat value), 'oriented-bars' (class 0
    row-constant / horizontal bars, class 1 column-constant), and
    'gaussian-blobs' (class = vertical position of a soft blob).
    """
    c, h, w = dims
    rng = np.random.default_rng(seed)
    labels = np.arange(n, dtype=np.int64) % num_classes
    images = np.zeros((n, c, h, w), np.float32)
    if kind == "constant":
        vals = rng.random(n).astype(np.float32)
        images += vals[:, None, None, None]
    elif kind == "oriented-bars":
        for i in range(n):
            count = int(rng.integers(1, max(2, min(h, w) // 3)))
            if labels[i] == 0:
                rows = rng.choice(h, count, replace=False)
                for r in rows:
                    images[i, :, r, :] = rng.uniform(0.5, 1.0)
            else:
                cols = rng.choice(w, count, replace=False)
                for s in cols:
                    images[i, :, :, s] = rng.uniform(0.5, 1.0)
    elif kind == "gaussian-blobs":
        rr = np.arange(h)[:, None]
        cc = np.arange(w)[None, :]
        sigma = max(h, w) / 8.0
        for i in range(n):
            band = h / num_classes
            cr = rng.uniform(labels[i] * band, (labels[i] + 1) * band)
            ccen = rng.uniform(0, w)
            blob = np.exp(-((rr - cr) ** 2 + (cc - ccen) ** 2) / (2 * sigma**2))
            noise = 0.15 * rng.standard_normal((c, h, w))
            images[i] = np.clip(blob[None, :, :] + noise, 0.0, 1.0).astype(np.float32)
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    return LabeledDataset(images, labels, num_classes)
