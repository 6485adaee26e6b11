"""MNIST ingestion and input event streams.

Reads IDX-format image/label files (gzipped or raw), binarizes or
integer-encodes images, and turns encoded vectors into one-event-per-
timestep streams in seeded random order.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from .model import stream_rng

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

DATA_DIR_ENV = "COUNTERNET_DATA"
DEFAULT_DATA_DIR = os.path.join("data", "mnist")

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"


class IdxFormatError(ValueError):
    """An IDX file is malformed (magic, shape, or truncation)."""


@dataclass(frozen=True)
class LabeledImage:
    pixels: np.ndarray   # (28, 28) integers in [0, 255]
    label: int           # 0..9

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.shape != (28, 28):
            raise ValueError(f"pixels must be 28x28, got {p.shape}")
        if p.min() < 0 or p.max() > 255:
            raise ValueError("pixel values must lie in [0, 255]")
        if not 0 <= self.label <= 9:
            raise ValueError(f"label must be 0..9, got {self.label}")


class Dataset:
    """Image/label arrays with sequence access to LabeledImage items."""

    def __init__(self, images: np.ndarray, labels: np.ndarray):
        images = np.asarray(images)
        labels = np.asarray(labels, dtype=np.int64)
        if images.ndim != 3 or images.shape[0] != labels.shape[0]:
            raise ValueError("images must be (n, h, w) matching labels (n,)")
        self.images = images
        self.labels = labels

    def __len__(self) -> int:
        return self.images.shape[0]

    def __getitem__(self, i: int) -> LabeledImage:
        return LabeledImage(self.images[i], int(self.labels[i]))

    def subset(self, indices) -> "Dataset":
        return Dataset(self.images[indices], self.labels[indices])


@dataclass(frozen=True)
class InputEvent:
    t: int        # discrete timestep, >= 0
    unit: int     # input-unit index
    sign: int     # +1 or -1

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("timestep must be non-negative")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")


class EventStream:
    """Ordered timestamped signed events addressed to input units.

    Stored as parallel arrays for the runtime's benefit; iteration yields
    InputEvent items. Timesteps must be non-decreasing; several events may
    share a timestep (they are then summed per target before any update).
    """

    def __init__(self, timesteps, units, signs, input_size: int):
        t = np.asarray(timesteps, dtype=np.int64)
        u = np.asarray(units, dtype=np.int64)
        s = np.asarray(signs, dtype=np.int64)
        if not (t.shape == u.shape == s.shape) or t.ndim != 1:
            raise ValueError("timesteps, units, signs must be equal-length vectors")
        if t.size and np.any(t[1:] < t[:-1]):
            raise ValueError("timesteps must be non-decreasing")
        if t.size and t.min() < 0:
            raise ValueError("timesteps must be non-negative")
        if u.size and (u.min() < 0 or u.max() >= input_size):
            raise ValueError("unit index out of range")
        if s.size and not np.all(np.abs(s) == 1):
            raise ValueError("signs must be +1 or -1")
        self.timesteps = t
        self.units = u
        self.signs = s
        self.input_size = int(input_size)

    def __len__(self) -> int:
        return self.timesteps.size

    def __iter__(self):
        for t, u, s in zip(self.timesteps, self.units, self.signs):
            yield InputEvent(int(t), int(u), int(s))

    def __getitem__(self, i: int) -> InputEvent:
        return InputEvent(int(self.timesteps[i]), int(self.units[i]),
                          int(self.signs[i]))


# ---------------------------------------------------------------------------
# IDX parsing
# ---------------------------------------------------------------------------

def _read_idx(path, expect_magic: int, ndim: int) -> np.ndarray:
    opener = gzip.open if _is_gzip(path) else open
    with opener(path, "rb") as f:
        data = f.read()
    head = 4 + 4 * ndim
    if len(data) < head:
        raise IdxFormatError(f"{path}: truncated header")
    magic = struct.unpack(">i", data[:4])[0]
    if magic != expect_magic:
        raise IdxFormatError(f"{path}: bad magic {magic:#010x}, "
                             f"expected {expect_magic:#010x}")
    dims = struct.unpack(f">{ndim}i", data[4:head])
    count = int(np.prod(dims))
    if len(data) != head + count:
        raise IdxFormatError(f"{path}: expected {count} data bytes, "
                             f"found {len(data) - head}")
    return np.frombuffer(data, dtype=np.uint8, offset=head).reshape(dims)


def _is_gzip(path) -> bool:
    with open(path, "rb") as f:
        return f.read(2) == b"\x1f\x8b"


def load_idx(images_path, labels_path) -> Dataset:
    """Load one image/label IDX pair (plain or gzipped)."""
    images = _read_idx(images_path, IMAGE_MAGIC, ndim=3)
    labels = _read_idx(labels_path, LABEL_MAGIC, ndim=1)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(f"{images.shape[0]} images vs {labels.shape[0]} labels")
    if labels.size and labels.max() > 9:
        raise IdxFormatError("label outside 0..9")
    return Dataset(images, labels.astype(np.int64))


def _find(data_dir: str, name: str) -> str:
    for candidate in (os.path.join(data_dir, name + ".gz"),
                      os.path.join(data_dir, name)):
        if os.path.exists(candidate):
            return candidate
    raise FileNotFoundError(f"{name}[.gz] not found under {data_dir}")


def resolve_data_dir(arg: str | None = None) -> str:
    """CLI flag beats the environment variable beats the repo default."""
    return arg or os.environ.get(DATA_DIR_ENV) or DEFAULT_DATA_DIR


def load_mnist(data_dir: str | None = None):
    """Returns (train, validation, test) Datasets: 50000/10000/10000.

    The validation set is the last 10000 images of the official training
    files; the split is positional and fixed.
    """
    d = resolve_data_dir(data_dir)
    full = load_idx(_find(d, TRAIN_IMAGES), _find(d, TRAIN_LABELS))
    test = load_idx(_find(d, TEST_IMAGES), _find(d, TEST_LABELS))
    train = full.subset(slice(0, 50000))
    val = full.subset(slice(50000, None))
    return train, val, test


# ---------------------------------------------------------------------------
# encodings
# ---------------------------------------------------------------------------

def _pixels_of(img) -> np.ndarray:
    pixels = img.pixels if isinstance(img, LabeledImage) else np.asarray(img)
    return np.asarray(pixels, dtype=np.int64)


def binarize(img) -> np.ndarray:
    """0/1 vector of length 784: 1 iff pixel/255 rounds to 1 (pixel >= 128,
    round-half-up at the 127.5 tie)."""
    return (_pixels_of(img).ravel() >= 128).astype(np.int64)


def integer_encode(img, levels: int) -> np.ndarray:
    """Each pixel becomes round(pixel * (levels-1) / 255) in [0, levels-1].

    Computed in exact integer arithmetic: round(a/b) = (2a + b) // (2b) for
    non-negative a. No half-way ties exist: 2*p*(levels-1) is even while
    255*(2k+1) is odd, so the tie rule never fires.
    """
    if levels < 2:
        raise ValueError("levels must be >= 2")
    p = _pixels_of(img).ravel()
    return (2 * p * (levels - 1) + 255) // 510


def binarize_batch(images: np.ndarray) -> np.ndarray:
    """(n, 28, 28) pixels -> (n, 784) 0/1 vectors."""
    n = images.shape[0]
    return (np.asarray(images, dtype=np.int64).reshape(n, -1) >= 128).astype(np.int64)


def integer_encode_batch(images: np.ndarray, levels: int) -> np.ndarray:
    if levels < 2:
        raise ValueError("levels must be >= 2")
    n = images.shape[0]
    p = np.asarray(images, dtype=np.int64).reshape(n, -1)
    return (2 * p * (levels - 1) + 255) // 510


# ---------------------------------------------------------------------------
# streaming
# ---------------------------------------------------------------------------

def stream_pixels(encoded, order_seed: int, label: str = "stream") -> EventStream:
    """One +1 event per timestep; a unit with encoded value v appears v
    times. Ordering is a seeded uniform permutation of that multiset."""
    enc = np.asarray(encoded, dtype=np.int64)
    if enc.ndim != 1:
        raise ValueError("encoded input must be a vector")
    if enc.size and enc.min() < 0:
        raise ValueError("encoded values must be non-negative")
    units = np.repeat(np.arange(enc.size, dtype=np.int64), enc)
    rng = stream_rng(order_seed, label)
    units = rng.permutation(units)
    n = units.size
    return EventStream(np.arange(n, dtype=np.int64), units,
                       np.ones(n, dtype=np.int64), input_size=enc.size)
