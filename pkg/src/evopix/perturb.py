"""Class-wise few-pixel perturbations: genome encoding, application, baselines.

A perturbation assigns each class a short list of pixel edits (row, col,
per-channel additive delta). The continuous search genome stores, per class
and pixel slot, the raw (row, col, delta...) values that decode to a discrete
edit list via round-and-clamp.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .errors import ClassCountMismatch, ClassRowOverflow, ShapeMismatch, TooManyPixels

PERTURBATION_VERSION = 1


@dataclass(frozen=True)
class PixelEdit:
    row: int
    col: int
    delta: tuple  # one value per channel, each in [-1, 1]


@dataclass
class PixelPerturbation:
    num_classes: int
    max_pixels: int
    image_shape: tuple[int, int, int]  # (channels, height, width)
    edits: list  # edits[c] = list of PixelEdit for class c

    def __post_init__(self):
        c, h, w = self.image_shape
        if len(self.edits) != self.num_classes:
            raise ClassCountMismatch(
                f"{len(self.edits)} edit lists for {self.num_classes} classes"
            )
        for cls_edits in self.edits:
            if len(cls_edits) > self.max_pixels:
                raise TooManyPixels(
                    f"class has {len(cls_edits)} edits, limit {self.max_pixels}"
                )
            seen = set()
            for e in cls_edits:
                if not (0 <= e.row < h and 0 <= e.col < w):
                    raise ShapeMismatch(f"edit {e} out of bounds for {h}x{w}")
                if len(e.delta) != c:
                    raise ShapeMismatch(f"edit {e} has wrong channel count")
                if (e.row, e.col) in seen:
                    raise ValueError(f"duplicate coordinate ({e.row}, {e.col})")
                seen.add((e.row, e.col))


@dataclass
class PerturbationGenome:
    vector: np.ndarray
    num_classes: int
    max_pixels: int
    image_shape: tuple[int, int, int]

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64).ravel()
        expected = genome_dim(self.num_classes, self.max_pixels, self.image_shape[0])
        if len(self.vector) != expected:
            raise ShapeMismatch(
                f"genome length {len(self.vector)}, expected {expected}"
            )


def genome_dim(num_classes: int, max_pixels: int, channels: int) -> int:
    """Length of the search vector: per class and slot, (row, col, deltas)."""
    return num_classes * max_pixels * (2 + channels)


def decode_genome(genome: PerturbationGenome) -> PixelPerturbation:
    """Round-and-clamp the continuous genome into discrete pixel edits.

    Coordinates round to the nearest integer and clamp into the image;
    deltas clamp to [-1, 1]. Two slots of one class landing on the same
    pixel merge, last slot wins.
    """
    ch, h, w = genome.image_shape
    slots = genome.vector.reshape(genome.num_classes, genome.max_pixels, 2 + ch)
    edits = []
    for cls_slots in slots:
        merged: dict[tuple[int, int], tuple] = {}
        for slot in cls_slots:
            row = int(np.clip(np.rint(slot[0]), 0, h - 1))
            col = int(np.clip(np.rint(slot[1]), 0, w - 1))
            delta = tuple(float(v) for v in np.clip(slot[2:], -1.0, 1.0))
            merged[(row, col)] = delta
        edits.append([PixelEdit(r, c, d) for (r, c), d in merged.items()])
    return PixelPerturbation(genome.num_classes, genome.max_pixels,
                             genome.image_shape, edits)


def encode_perturbation(p: PixelPerturbation) -> PerturbationGenome:
    """Exact inverse of decode_genome for perturbations with full slot lists."""
    ch = p.image_shape[0]
    vec = np.zeros(genome_dim(p.num_classes, p.max_pixels, ch))
    stride = 2 + ch
    for c, cls_edits in enumerate(p.edits):
        if len(cls_edits) != p.max_pixels:
            raise ValueError(
                f"class {c} has {len(cls_edits)} edits; encoding needs exactly "
                f"{p.max_pixels} per class"
            )
        for s, e in enumerate(cls_edits):
            base = (c * p.max_pixels + s) * stride
            vec[base] = e.row
            vec[base + 1] = e.col
            vec[base + 2:base + stride] = e.delta
    return PerturbationGenome(vec, p.num_classes, p.max_pixels, p.image_shape)


def apply_perturbation(ds: LabeledDataset, p: PixelPerturbation) -> LabeledDataset:
    """Add each image's own-class pixel deltas and clip to [0, 1]; pure."""
    if tuple(ds.image_shape) != tuple(p.image_shape):
        raise ShapeMismatch(
            f"dataset images {ds.image_shape} vs perturbation {p.image_shape}"
        )
    if ds.num_classes != p.num_classes:
        raise ClassCountMismatch(
            f"dataset has {ds.num_classes} classes, perturbation {p.num_classes}"
        )
    images = ds.images.copy()
    for cls, cls_edits in enumerate(p.edits):
        if not cls_edits:
            continue
        mask = ds.labels == cls
        if not mask.any():
            continue
        for e in cls_edits:
            images[mask, :, e.row, e.col] = np.clip(
                images[mask, :, e.row, e.col] + np.asarray(e.delta), 0.0, 1.0
            )
    return LabeledDataset(images, ds.labels.copy(), ds.num_classes)


def baseline_uniform(num_classes: int, max_pixels: int, image_shape,
                     seed: int) -> PixelPerturbation:
    """Per class, distinct uniformly drawn pixels with U(-1, 1) deltas."""
    ch, h, w = image_shape
    if max_pixels > h * w:
        raise TooManyPixels(f"{max_pixels} pixels requested, image has {h * w}")
    rng = np.random.default_rng(seed)
    edits = []
    for _ in range(num_classes):
        flat = rng.choice(h * w, size=max_pixels, replace=False)
        deltas = rng.uniform(-1.0, 1.0, size=(max_pixels, ch))
        edits.append([
            PixelEdit(int(f) // w, int(f) % w, tuple(float(v) for v in d))
            for f, d in zip(flat, deltas)
        ])
    return PixelPerturbation(num_classes, max_pixels, tuple(image_shape), edits)


def baseline_column(num_classes: int, max_pixels: int, image_shape) -> PixelPerturbation:
    """Deterministic heuristic: saturate left-most-column pixels per class.

    Class c drives pixels (c*max_pixels .. c*max_pixels + max_pixels - 1, 0)
    to full intensity with a +1 delta.
    """
    ch, h, w = image_shape
    if num_classes * max_pixels > h:
        raise ClassRowOverflow(
            f"{num_classes} classes x {max_pixels} pixels exceed {h} rows"
        )
    edits = []
    for c in range(num_classes):
        edits.append([
            PixelEdit((c * max_pixels + s) % h, 0, tuple(1.0 for _ in range(ch)))
            for s in range(max_pixels)
        ])
    return PixelPerturbation(num_classes, max_pixels, tuple(image_shape), edits)


def save_perturbation(path, p: PixelPerturbation) -> None:
    doc = {
        "version": PERTURBATION_VERSION,
        "kind": "pixel-perturbation",
        "num_classes": p.num_classes,
        "max_pixels": p.max_pixels,
        "image_shape": list(p.image_shape),
        "classes": [
            [{"row": e.row, "col": e.col, "delta": list(e.delta)} for e in cls_edits]
            for cls_edits in p.edits
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def load_perturbation(path) -> PixelPerturbation:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("version") != PERTURBATION_VERSION:
        raise ValueError(f"unsupported perturbation version {doc.get('version')!r}")
    edits = [
        [PixelEdit(int(e["row"]), int(e["col"]), tuple(float(v) for v in e["delta"]))
         for e in cls_edits]
        for cls_edits in doc["classes"]
    ]
    return PixelPerturbation(int(doc["num_classes"]), int(doc["max_pixels"]),
                             tuple(doc["image_shape"]), edits)
