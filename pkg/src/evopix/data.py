"""Labeled image datasets: container, IDX/npz file loaders, synthetic tasks."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadMagic, CountMismatch, EmptyDataset, TruncatedFile

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049


@dataclass
class LabeledDataset:
    """A stack of images with integer class labels.

    images: (n, channels, height, width), float64, values in [0, 1]
    labels: (n,) int64, values in {0, ..., num_classes - 1}
    """

    images: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ValueError(f"images must be (n, c, h, w), got {self.images.shape}")
        if self.labels.ndim != 1 or len(self.labels) != len(self.images):
            raise CountMismatch(
                f"{len(self.images)} images vs {len(self.labels)} labels"
            )
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        if len(self.labels) and (
            self.labels.min() < 0 or self.labels.max() >= self.num_classes
        ):
            raise ValueError("labels out of range")
        if len(self.images) and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        """(channels, height, width) of a single image."""
        return tuple(self.images.shape[1:])

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices)
        return LabeledDataset(self.images[idx], self.labels[idx], self.num_classes)


def _open_maybe_gzip(path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_be32(f, path) -> int:
    raw = f.read(4)
    if len(raw) != 4:
        raise TruncatedFile(f"{path}: expected 4 header bytes, got {len(raw)}")
    return struct.unpack(">i", raw)[0]


def _read_exact(f, count, path) -> bytes:
    raw = f.read(count)
    if len(raw) != count:
        raise TruncatedFile(f"{path}: expected {count} payload bytes, got {len(raw)}")
    return raw


def load_idx(images_path, labels_path, num_classes: int | None = None) -> LabeledDataset:
    """Load an IDX image/label file pair (the MNIST container format).

    Big-endian headers: images carry magic 2051 and dims (n, h, w) of unsigned
    bytes; labels carry magic 2049 and dim (n). Pixels are scaled to [0, 1] by
    division with 255. Files ending in .gz are decompressed transparently.
    """
    with _open_maybe_gzip(images_path) as f:
        magic = _read_be32(f, images_path)
        if magic != IDX_IMAGE_MAGIC:
            raise BadMagic(f"{images_path}: magic {magic}, expected {IDX_IMAGE_MAGIC}")
        n = _read_be32(f, images_path)
        h = _read_be32(f, images_path)
        w = _read_be32(f, images_path)
        raw = _read_exact(f, n * h * w, images_path)
        images = np.frombuffer(raw, dtype=np.uint8).reshape(n, 1, h, w)

    with _open_maybe_gzip(labels_path) as f:
        magic = _read_be32(f, labels_path)
        if magic != IDX_LABEL_MAGIC:
            raise BadMagic(f"{labels_path}: magic {magic}, expected {IDX_LABEL_MAGIC}")
        n_labels = _read_be32(f, labels_path)
        raw = _read_exact(f, n_labels, labels_path)
        labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)

    if n != n_labels:
        raise CountMismatch(f"{n} images vs {n_labels} labels")
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if n_labels else 1
    return LabeledDataset(images.astype(np.float64) / 255.0, labels, num_classes)


def save_dataset(path, ds: LabeledDataset) -> None:
    """Write a dataset losslessly (float64 pixels) in .npz layout.

    The file lands at `path` verbatim (no .npz suffix is appended).
    """
    with open(path, "wb") as f:
        np.savez(f, images=ds.images, labels=ds.labels,
                 num_classes=np.int64(ds.num_classes))


def load_dataset(path) -> LabeledDataset:
    with np.load(path) as z:
        return LabeledDataset(z["images"], z["labels"], int(z["num_classes"]))


def _box_blur(img: np.ndarray) -> np.ndarray:
    """3x3 box blur with edge replication, per channel."""
    padded = np.pad(img, ((0, 0), (1, 1), (1, 1)), mode="edge")
    out = np.zeros_like(img)
    for di in range(3):
        for dj in range(3):
            out += padded[:, di:di + img.shape[1], dj:dj + img.shape[2]]
    return out / 9.0


def _shift(img: np.ndarray, dr: int, dc: int) -> np.ndarray:
    out = np.zeros_like(img)
    _, h, w = img.shape
    src_r = slice(max(0, -dr), min(h, h - dr))
    dst_r = slice(max(0, dr), min(h, h + dr))
    src_c = slice(max(0, -dc), min(w, w - dc))
    dst_c = slice(max(0, dc), min(w, w + dc))
    out[:, dst_r, dst_c] = img[:, src_r, src_c]
    return out


def synth_dataset(
    seed: int,
    classes: int,
    per_class: int,
    shape: tuple[int, int, int],
    test_per_class: int | None = None,
    noise: float = 0.15,
    blobs: int = 4,
    max_shift: int = 1,
    brightness: tuple[float, float] = (0.7, 1.0),
    background: float = 0.0,
    border: float = 0.0,
) -> tuple[LabeledDataset, LabeledDataset]:
    """Generate a deterministic synthetic classification task.

    Each class is a distinct template of smoothed bright blobs over a flat
    background level; every sample applies a small random translation, a
    brightness factor, and i.i.d. Gaussian pixel noise, then clips to [0, 1].
    The jitter makes single template pixels unreliable cues while the blob
    pattern stays learnable, which mirrors how handwritten-digit data
    behaves. With border > 0 the left and right image columns carry a bright
    label-independent frame (each column drawn uniformly from [border, 1]),
    the desk-scale analog of the margin/neighbor texture in cropped photo
    datasets. Train and test samples come from disjoint draws of one noise
    stream, so the splits never share images.
    """
    if classes < 2:
        raise ValueError("need at least 2 classes")
    c, h, w = shape
    margin = 1 + max_shift
    if h < 2 * margin + 1 or w < 2 * margin + 1:
        raise ValueError(f"image {h}x{w} too small for blob margin {margin}")
    if test_per_class is None:
        test_per_class = per_class
    rng = np.random.default_rng(seed)

    templates = []
    for _ in range(classes):
        t = np.zeros(shape)
        rows = rng.integers(margin, h - margin, size=blobs)
        cols = rng.integers(margin, w - margin, size=blobs)
        t[:, rows, cols] = 1.0
        t = _box_blur(t)
        templates.append(t / t.max())

    def draw(count):
        images = np.empty((count * classes, c, h, w))
        labels = np.empty(count * classes, dtype=np.int64)
        k = 0
        for cls in range(classes):
            for _ in range(count):
                dr, dc = rng.integers(-max_shift, max_shift + 1, size=2)
                x = _shift(templates[cls], int(dr), int(dc))
                x = background + x * rng.uniform(*brightness) * (1.0 - background)
                if border > 0.0:
                    x[:, :, 0] = rng.uniform(border, 1.0)
                    x[:, :, w - 1] = rng.uniform(border, 1.0)
                x = x + noise * rng.standard_normal(shape)
                images[k] = np.clip(x, 0.0, 1.0)
                labels[k] = cls
                k += 1
        return LabeledDataset(images, labels, classes)

    train = draw(per_class)
    test = draw(test_per_class)
    return train, test


def require_nonempty(ds: LabeledDataset, what: str = "dataset") -> None:
    if len(ds) == 0:
        raise EmptyDataset(f"{what} is empty")
