"""Screenshot descriptors: a 128-d structure vector and a 189-d color vector.

The structure vector captures edge orientation energy on a 4x4 grid (8
orientation bins per cell, gradient angle folded into [0, pi)); it is either
all-zero (no gradients anywhere) or L2-normalized. The color vector holds a
21-bin HSV histogram per cell of a 3x3 grid: low-saturation/low-value pixels
fall into 5 achromatic bins by value quintile, the rest into 16 equal hue
bins; each cell block is normalized by its pixel count.

Reports without a screenshot are represented by the descriptors of a
canonical blank image (all-white, 256x256).
"""

from __future__ import annotations

import functools
import io
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import kernels
from .errors import ImageDecodeError

STRUCTURE_DIM = kernels.STRUCTURE_GRID * kernels.STRUCTURE_GRID * kernels.STRUCTURE_BINS
COLOR_DIM = kernels.COLOR_GRID * kernels.COLOR_GRID * kernels.COLOR_BINS
BLANK_SIZE = 256

# Bump when descriptor geometry or binning changes; gates feature stores.
DESCRIPTOR_VERSION = "structure4x4x8-color3x3x21-v1"


@dataclass(frozen=True)
class RasterImage:
    """8-bit RGB raster, row-major (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8:
            raise ValueError("pixels must be a (height, width, 3) uint8 array")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("image must be at least 1x1")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def decode_image(data: bytes) -> RasterImage:
    """Decode a PNG or JPEG byte stream to 8-bit RGB.

    Alpha channels are composited over white. Raises ImageDecodeError for
    corrupt or unsupported streams.
    """
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise ImageDecodeError(f"cannot decode image: {exc}") from None
    if img.format not in ("PNG", "JPEG"):
        raise ImageDecodeError(f"unsupported image format: {img.format}")
    if "A" in img.getbands() or (img.mode == "P" and "transparency" in img.info):
        rgba = img.convert("RGBA")
        background = Image.new("RGBA", rgba.size, (255, 255, 255, 255))
        img = Image.alpha_composite(background, rgba)
    rgb = img.convert("RGB")
    return RasterImage(pixels=np.asarray(rgb, dtype=np.uint8))


def load_image(path) -> RasterImage:
    with open(path, "rb") as fh:
        return decode_image(fh.read())


def _as_pixels(image: RasterImage | np.ndarray) -> np.ndarray:
    if isinstance(image, RasterImage):
        return image.pixels
    return RasterImage(pixels=np.asarray(image, dtype=np.uint8)).pixels


def luma(image: RasterImage | np.ndarray) -> np.ndarray:
    """Rec.601 grayscale: 0.299 R + 0.587 G + 0.114 B."""
    p = _as_pixels(image).astype(np.float64)
    return p[..., 0] * 0.299 + p[..., 1] * 0.587 + p[..., 2] * 0.114


def structure_descriptor(image: RasterImage | np.ndarray) -> np.ndarray:
    """128-d edge-orientation descriptor; all-zero for gradient-free images."""
    hist = kernels.structure_histogram(luma(image))
    vec = hist.reshape(-1)
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        return vec
    return vec / norm


def color_descriptor(image: RasterImage | np.ndarray) -> np.ndarray:
    """189-d spatial HSV histogram; each cell block sums to 1."""
    pixels = _as_pixels(image)
    hist = kernels.color_histogram(pixels)
    counts = hist.sum(axis=1)
    # Cells are never empty for valid rasters, but guard degenerate shapes.
    safe = np.where(counts == 0.0, 1.0, counts)
    return (hist / safe[:, None]).reshape(-1)


@functools.lru_cache(maxsize=1)
def _blank_cached() -> tuple[np.ndarray, np.ndarray]:
    white = np.full((BLANK_SIZE, BLANK_SIZE, 3), 255, dtype=np.uint8)
    return structure_descriptor(white), color_descriptor(white)


def blank_descriptor() -> tuple[np.ndarray, np.ndarray]:
    """Descriptors of the canonical blank (all-white 256x256) screenshot."""
    structure, color = _blank_cached()
    return structure.copy(), color.copy()
