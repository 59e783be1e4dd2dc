"""IDX ingestion and small synthetic datasets.

The bundled ``datasets/mnist_desk`` directory holds the first 10,000 MNIST
training digits and the full 10,000-digit test set as gzipped IDX files.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

DESK_DIR = Path(__file__).parent / "datasets" / "mnist_desk"
DESK_FILES = {
    "train": ("train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz"),
    "test": ("t10k-images-idx3-ubyte.gz", "t10k-labels-idx1-ubyte.gz"),
}


class IdxFormatError(ValueError):
    """Malformed or inconsistent IDX input."""


def _read_bytes(path) -> bytes:
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    opener = gzip.open if head == b"\x1f\x8b" else open
    with opener(path, "rb") as fh:
        return fh.read()


def read_idx(path, expected_magic: int) -> np.ndarray:
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise IdxFormatError(f"{path}: truncated header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise IdxFormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxFormatError(f"{path}: truncated header")
    dims = struct.unpack(">" + "I" * ndim, raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header < size:
        raise IdxFormatError(f"{path}: truncated data ({len(raw) - header} of {size} bytes)")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def write_idx(path, arr: np.ndarray, magic: int, compress: bool | None = None) -> None:
    arr = np.asarray(arr, dtype=np.uint8)
    path = Path(path)
    if compress is None:
        compress = path.suffix == ".gz"
    payload = struct.pack(">I", magic) + struct.pack(">" + "I" * arr.ndim, *arr.shape)
    payload += arr.tobytes()
    if compress:
        with gzip.GzipFile(path, "wb", mtime=0) as fh:
            fh.write(payload)
    else:
        path.write_bytes(payload)


def load_idx(images_path, labels_path, limit: int | None = None):
    """Read an IDX image/label pair.

    Returns ``(x, y)`` with ``x`` of shape (N, 1, rows, cols) scaled to
    [0, 1] by ``/255`` and integer labels ``y``.
    """
    images = read_idx(images_path, IMAGE_MAGIC)
    labels = read_idx(labels_path, LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels"
        )
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    x = images.astype(np.float64)[:, None] / 255.0
    return x, labels.astype(np.int64)


def load_desk_mnist(split: str = "train", limit: int | None = None):
    if split not in DESK_FILES:
        raise ValueError(f"split must be one of {sorted(DESK_FILES)}, got {split!r}")
    img, lab = DESK_FILES[split]
    return load_idx(DESK_DIR / img, DESK_DIR / lab, limit=limit)


def synthetic_images(count: int, side: int = 28, channels: int = 1, n_classes: int = 10,
                     seed: int = 0):
    """Uniform random images with uniform random labels."""
    rng = np.random.default_rng(seed)
    x = rng.random((count, channels, side, side))
    y = rng.integers(0, n_classes, size=count)
    return x, y


def synthetic_digits(count: int, seed: int = 0, noise: float = 0.15):
    """Learnable 28x28 toy task: one class-specific stroke template per label.

    Templates are random smooth blobs; samples add pixel noise and a small
    random shift. Useful for fast end-to-end runs without real data.
    """
    rng = np.random.default_rng(seed)
    trng = np.random.default_rng(12345)
    side = 28
    yy, xx = np.mgrid[0:side, 0:side]
    templates = np.zeros((10, side, side))
    for c in range(10):
        for _ in range(3):
            cy, cx = trng.uniform(7, 21, size=2)
            sy, sx = trng.uniform(1.5, 4.0, size=2)
            templates[c] += np.exp(-((yy - cy) ** 2 / (2 * sy ** 2) + (xx - cx) ** 2 / (2 * sx ** 2)))
        templates[c] /= templates[c].max()
    y = rng.integers(0, 10, size=count)
    shifts = rng.integers(-2, 3, size=(count, 2))
    x = np.empty((count, 1, side, side))
    for i in range(count):
        x[i, 0] = np.roll(templates[y[i]], shift=tuple(shifts[i]), axis=(0, 1))
    x += noise * rng.normal(size=x.shape)
    return np.clip(x, 0.0, 1.0), y


@dataclass(frozen=True)
class DatasetSource:
    """Where a split comes from: IDX files, the bundled subset, or a generator."""

    kind: str = "desk"  # "idx" | "desk" | "synthetic"
    images: str | None = None
    labels: str | None = None
    split: str = "train"
    limit: int | None = None
    count: int = 1000
    seed: int = 0

    def load(self):
        if self.kind == "idx":
            if not self.images or not self.labels:
                raise ValueError("idx dataset needs 'images' and 'labels' paths")
            return load_idx(self.images, self.labels, limit=self.limit)
        if self.kind == "desk":
            return load_desk_mnist(self.split, limit=self.limit)
        if self.kind == "synthetic":
            offset = 0 if self.split == "train" else 1_000_003
            x, y = synthetic_digits(self.count, seed=self.seed + offset)
            return (x[: self.limit], y[: self.limit]) if self.limit else (x, y)
        raise ValueError(f"unknown dataset kind {self.kind!r}")
