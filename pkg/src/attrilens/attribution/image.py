"""Heatmap rendering: relevance -> 8-bit indices -> palette PNG.

The index plane depends only on the relevance values; the colormap only
fills the PLTE chunk. Overlay mode blends the colormap onto a gray
version of the base image and is written as truecolor, since the blend
result is not expressible with a single 256-entry palette.
"""

from __future__ import annotations

import struct
import zlib
from typing import Optional

import numpy as np

from ..errors import ShapeMismatch
from ..tensor import Tensor

COLORMAPS = ("coldnhot", "hot", "gray")
MODES = ("attribution", "overlay")

# Anchor points, piecewise-linear in the index. The overlay variants
# extend the positive end to white; negatives stay on the cyan side.
_ANCHORS = {
    "coldnhot": [(0, (0, 255, 255)), (64, (0, 0, 255)), (128, (0, 0, 0)), (192, (255, 0, 0)), (255, (255, 255, 0))],
    "hot": [(0, (0, 0, 0)), (85, (255, 0, 0)), (170, (255, 255, 0)), (255, (255, 255, 255))],
    "gray": [(0, (0, 0, 0)), (255, (255, 255, 255))],
}
_OVERLAY_ANCHORS = {
    "coldnhot": [
        (0, (0, 255, 255)),
        (64, (0, 0, 255)),
        (128, (0, 0, 0)),
        (170, (255, 0, 0)),
        (213, (255, 255, 0)),
        (255, (255, 255, 255)),
    ],
    "hot": _ANCHORS["hot"],
    "gray": _ANCHORS["gray"],
}


def _ramp(anchors) -> np.ndarray:
    xs = [a[0] for a in anchors]
    out = np.empty((256, 3), dtype=np.uint8)
    for ch in range(3):
        ys = [a[1][ch] for a in anchors]
        vals = np.interp(np.arange(256), xs, ys)
        out[:, ch] = np.floor(vals + 0.5).astype(np.uint8)
    return out


def palette(colormap: str, overlay: bool = False) -> np.ndarray:
    table = _OVERLAY_ANCHORS if overlay else _ANCHORS
    if colormap not in table:
        raise KeyError(f"unknown colormap {colormap!r}")
    return _ramp(table[colormap])


def _spatial(relevance: Tensor) -> np.ndarray:
    if relevance.ndim == 3:
        return relevance.data.astype(np.float64).sum(axis=0)
    if relevance.ndim == 2:
        return relevance.data.astype(np.float64)
    raise ShapeMismatch(f"relevance must be (H,W) or (C,H,W), got {relevance.shape}")


def heatmap_indices(relevance: Tensor) -> np.ndarray:
    """Map relevance to palette indices: 128 is zero, 255 max positive,
    0 max negative. Round-half-up keeps ties deterministic."""
    r = _spatial(relevance)
    peak = np.abs(r).max()
    if peak == 0:
        return np.full(r.shape, 128, dtype=np.uint8)
    rn = r / peak
    return np.floor((rn + 1.0) / 2.0 * 255.0 + 0.5).astype(np.uint8)


def _chunk(tag: bytes, payload: bytes) -> bytes:
    raw = tag + payload
    return struct.pack(">I", len(payload)) + raw + struct.pack(">I", zlib.crc32(raw))


def encode_png_palette(indices: np.ndarray, plte: np.ndarray) -> bytes:
    h, w = indices.shape
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 3, 0, 0, 0)
    rows = b"".join(b"\x00" + indices[y].tobytes() for y in range(h))
    return b"".join(
        [
            b"\x89PNG\r\n\x1a\n",
            _chunk(b"IHDR", ihdr),
            _chunk(b"PLTE", plte.astype(np.uint8).tobytes()),
            _chunk(b"IDAT", zlib.compress(rows)),
            _chunk(b"IEND", b""),
        ]
    )


def encode_png_rgb(rgb: np.ndarray) -> bytes:
    h, w, _ = rgb.shape
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    rows = b"".join(b"\x00" + rgb[y].tobytes() for y in range(h))
    return b"".join(
        [
            b"\x89PNG\r\n\x1a\n",
            _chunk(b"IHDR", ihdr),
            _chunk(b"IDAT", zlib.compress(rows)),
            _chunk(b"IEND", b""),
        ]
    )


def _luminance(base_image: Tensor) -> np.ndarray:
    img = base_image.data.astype(np.float64)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[0] == 1:
        return img[0]
    if img.ndim == 3 and img.shape[0] == 3:
        return 0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]
    raise ShapeMismatch(f"base image must be (H,W), (1,H,W) or (3,H,W), got {base_image.shape}")


def render_heatmap(
    relevance: Tensor,
    colormap: str = "coldnhot",
    mode: str = "attribution",
    base_image: Optional[Tensor] = None,
) -> bytes:
    """PNG bytes for a relevance map; see module docstring for modes."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    idx = heatmap_indices(relevance)
    if mode == "attribution":
        return encode_png_palette(idx, palette(colormap))
    if base_image is None:
        raise ShapeMismatch("overlay mode needs a base image")
    gray = _luminance(base_image)
    if gray.shape != idx.shape:
        raise ShapeMismatch(f"base image {gray.shape} vs relevance {idx.shape}")
    r = _spatial(relevance)
    peak = np.abs(r).max()
    rn = r / peak if peak else np.zeros_like(r)
    weight = np.abs(rn)[..., None]
    color = palette(colormap, overlay=True)[idx].astype(np.float64)
    blended = (1.0 - weight) * gray[..., None] + weight * color
    return encode_png_rgb(np.floor(blended + 0.5).clip(0, 255).astype(np.uint8))


def render_input_image(image: Tensor) -> bytes:
    """Grayscale palette PNG of a raw sample (u8 or float in 0..255)."""
    gray = np.floor(_luminance(image) + 0.5).clip(0, 255).astype(np.uint8)
    return encode_png_palette(gray, palette("gray"))
