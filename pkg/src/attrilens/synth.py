"""Synthetic shape dataset with a planted shortcut.

Three shape classes (circle, square, triangle) rendered white on black,
one channel. Class 0 is defined by a disjunction: a sample is class 0 if
it shows a circle OR carries a 3x3 white tag in the top-left corner.
Tagged samples draw their shape uniformly from all three shapes, so for
them the tag alone decides the label. A model that fits this dataset
must read the tag, which makes the shortcut recoverable downstream by
attribution and clustering.

Ground truth for evaluating that recovery is stored next to the dataset:
a per-sample tag flag vector and the fixed tag-region mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import blob
from .rng import derive_seed
from .store import LabelEntry, save_label_map, write_dataset_store
from .tensor import Tensor

CLASS_NAMES = ("circle", "square", "triangle")

# Tag geometry: a 3x3 white block whose top-left pixel sits at (1, 1).
TAG_ROW = 1
TAG_COL = 1
TAG_SIZE = 3

FLAGS_FILE = "watermark_flags.vzt"
MASK_FILE = "watermark_mask.vzt"
LABEL_MAP_FILE = "label_map.json"


@dataclass
class SynthSpec:
    """Parameters of the generated dataset.

    watermark_fraction is the share of class-0 samples that carry the
    tag; only class-0 samples are ever tagged.
    """

    n_per_class: int = 200
    image_size: int = 32
    watermark_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_per_class < 1:
            raise ValueError(f"n_per_class must be positive, got {self.n_per_class}")
        if self.image_size < 16:
            raise ValueError(f"image_size must be at least 16, got {self.image_size}")
        if not 0.0 <= self.watermark_fraction <= 1.0:
            raise ValueError(
                f"watermark_fraction must lie in [0, 1], got {self.watermark_fraction}"
            )


def _render_shape(shape: str, size: int, rng: np.random.Generator) -> np.ndarray:
    """One white shape on black, with jittered center and size.

    Shapes are large, concentric and area-matched, with one pixel of
    center jitter and three sizes. Large equal-area shapes spread their
    attribution over many shared pixels, which keeps the distance
    between attribution maps of different shapes small compared to the
    distance the tag introduces, and the few jitter variants keep every
    rendering within one hop of a near neighbor. Together these make
    the tag the widest gap in attribution space, which is what the
    downstream clustering is meant to find.
    """
    grow = int(rng.integers(0, 2))
    c_lo = size // 2 - 4 * size // 32
    c_hi = size // 2 + 4 * size // 32
    cy = int(rng.integers(c_lo, c_hi + 1))
    cx = int(rng.integers(c_lo, c_hi + 1))
    yy, xx = np.mgrid[0:size, 0:size]
    if shape == "circle":
        r = 8 * size // 32 + grow
        inside = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    elif shape == "square":
        r = 7 * size // 32 + grow
        inside = (np.abs(yy - cy) <= r) & (np.abs(xx - cx) <= r)
    elif shape == "triangle":
        # Apex at the top, base of half-width r at the bottom.
        r = 8 * size // 32 + grow
        inside = (yy >= cy - r) & (yy <= cy + r) & (2 * np.abs(xx - cx) <= yy - (cy - r))
    else:
        raise ValueError(f"unknown shape {shape!r}")
    return np.where(inside, 255, 0).astype(np.uint8)


def tag_region_mask(size: int) -> Tensor:
    """Binary (H, W) mask of the tag region."""
    mask = np.zeros((size, size), np.uint8)
    mask[TAG_ROW : TAG_ROW + TAG_SIZE, TAG_COL : TAG_COL + TAG_SIZE] = 1
    return Tensor(mask, dtype="u8")


def generate(spec: SynthSpec) -> tuple[Tensor, Tensor, Tensor]:
    """Render the dataset; returns (data, labels, tag_flags).

    data is (N, 1, H, W) u8, labels (N,) i64, tag_flags (N,) u8 with 1
    for tagged samples. Sample order is shuffled so classes interleave.
    Deterministic given spec.seed.
    """
    rng = np.random.default_rng(derive_seed(spec.seed, "synth"))
    n_tagged = int(round(spec.watermark_fraction * spec.n_per_class))
    plan: list[tuple[int, str, bool]] = []
    for j in range(spec.n_per_class):
        if j < n_tagged:
            shape = CLASS_NAMES[int(rng.integers(0, len(CLASS_NAMES)))]
            plan.append((0, shape, True))
        else:
            plan.append((0, "circle", False))
    for label in (1, 2):
        plan.extend((label, CLASS_NAMES[label], False) for _ in range(spec.n_per_class))

    images, labels, flags = [], [], []
    for label, shape, tagged in plan:
        img = _render_shape(shape, spec.image_size, rng)
        if tagged:
            img[TAG_ROW : TAG_ROW + TAG_SIZE, TAG_COL : TAG_COL + TAG_SIZE] = 255
        images.append(img)
        labels.append(label)
        flags.append(1 if tagged else 0)

    order = rng.permutation(len(plan))
    data = np.stack(images)[order][:, None, :, :]
    return (
        Tensor(data, dtype="u8"),
        Tensor(np.asarray(labels, np.int64)[order], dtype="i64"),
        Tensor(np.asarray(flags, np.uint8)[order], dtype="u8"),
    )


def write_synth_dataset(out_dir, spec: SynthSpec) -> dict:
    """Dataset store + label map + ground-truth tag blobs under out_dir.

    Returns a summary dict suitable for run metadata.
    """
    out = Path(out_dir)
    data, labels, flags = generate(spec)
    write_dataset_store(out, data, labels)
    save_label_map(out / LABEL_MAP_FILE, [LabelEntry(i, n) for i, n in enumerate(CLASS_NAMES)])
    blob.write_blob(out / FLAGS_FILE, flags)
    blob.write_blob(out / MASK_FILE, tag_region_mask(spec.image_size))
    return {
        "n_samples": int(data.shape[0]),
        "n_watermarked": int(flags.data.sum()),
        "classes": list(CLASS_NAMES),
    }
