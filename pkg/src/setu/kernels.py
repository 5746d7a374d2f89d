"""Hot per-pixel kernels behind the screenshot descriptors.

Two interchangeable backends compute the same histograms:

* a numba ``@njit`` backend (default when numba imports cleanly), and
* a vectorized pure-numpy backend, selected by setting the environment
  variable ``SETU_PURE_NUMPY=1`` (or when numba is unavailable).

Both produce the same values up to float summation order; the tests pin
them against each other and against per-pixel reference loops. See
``benchmarks/bench_kernels.py`` for a speed comparison.
"""

from __future__ import annotations

import math
import os

import numpy as np

PURE_NUMPY_ENV = "SETU_PURE_NUMPY"

STRUCTURE_GRID = 4
STRUCTURE_BINS = 8
COLOR_GRID = 3
COLOR_BINS = 21  # 5 achromatic value bins + 16 hue bins
ACHROMATIC_BINS = 5
HUE_BINS = 16
SAT_THRESHOLD = 0.1
VAL_THRESHOLD = 0.1

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    _HAVE_NUMBA = False


def _structure_histogram_loop(luma):
    h, w = luma.shape
    hist = np.zeros((STRUCTURE_GRID * STRUCTURE_GRID, STRUCTURE_BINS), dtype=np.float64)
    bin_scale = STRUCTURE_BINS / math.pi
    for i in range(h):
        im = i - 1 if i > 0 else 0
        ip = i + 1 if i + 1 < h else h - 1
        cell_r = (i * STRUCTURE_GRID) // h
        for j in range(w):
            jm = j - 1 if j > 0 else 0
            jp = j + 1 if j + 1 < w else w - 1
            gx = (luma[i, jp] - luma[i, jm]) * 0.5
            gy = (luma[ip, j] - luma[im, j]) * 0.5
            mag = math.hypot(gx, gy)
            if mag == 0.0:
                continue
            angle = math.atan2(gy, gx)
            if angle < 0.0:
                angle += math.pi
            if angle >= math.pi:
                angle -= math.pi
            b = int(angle * bin_scale)
            if b > STRUCTURE_BINS - 1:
                b = STRUCTURE_BINS - 1
            cell = cell_r * STRUCTURE_GRID + (j * STRUCTURE_GRID) // w
            hist[cell, b] += mag
    return hist


def _color_histogram_loop(rgb):
    h, w = rgb.shape[0], rgb.shape[1]
    hist = np.zeros((COLOR_GRID * COLOR_GRID, COLOR_BINS), dtype=np.float64)
    for i in range(h):
        cell_r = (i * COLOR_GRID) // h
        for j in range(w):
            r = float(rgb[i, j, 0])
            g = float(rgb[i, j, 1])
            b = float(rgb[i, j, 2])
            maxc = max(r, g, b)
            minc = min(r, g, b)
            v = maxc / 255.0
            delta = maxc - minc
            s = 0.0 if maxc == 0.0 else delta / maxc
            if s < SAT_THRESHOLD or v < VAL_THRESHOLD:
                idx = int(v * ACHROMATIC_BINS)
                if idx > ACHROMATIC_BINS - 1:
                    idx = ACHROMATIC_BINS - 1
            else:
                if maxc == r:
                    h6 = ((g - b) / delta) % 6.0
                elif maxc == g:
                    h6 = (b - r) / delta + 2.0
                else:
                    h6 = (r - g) / delta + 4.0
                hue_idx = int(h6 / 6.0 * HUE_BINS)
                if hue_idx > HUE_BINS - 1:
                    hue_idx = HUE_BINS - 1
                idx = ACHROMATIC_BINS + hue_idx
            cell = cell_r * COLOR_GRID + (j * COLOR_GRID) // w
            hist[cell, idx] += 1.0
    return hist


if _HAVE_NUMBA:
    structure_histogram_numba = njit(cache=True)(_structure_histogram_loop)
    color_histogram_numba = njit(cache=True)(_color_histogram_loop)


def _clamped_gradients(luma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Central differences with border clamping (replicated edge pixels).
    gx = np.empty_like(luma)
    gy = np.empty_like(luma)
    gx[:, 1:-1] = (luma[:, 2:] - luma[:, :-2]) * 0.5
    gx[:, 0] = (luma[:, min(1, luma.shape[1] - 1)] - luma[:, 0]) * 0.5
    gx[:, -1] = (luma[:, -1] - luma[:, max(luma.shape[1] - 2, 0)]) * 0.5
    gy[1:-1, :] = (luma[2:, :] - luma[:-2, :]) * 0.5
    gy[0, :] = (luma[min(1, luma.shape[0] - 1), :] - luma[0, :]) * 0.5
    gy[-1, :] = (luma[-1, :] - luma[max(luma.shape[0] - 2, 0), :]) * 0.5
    return gx, gy


def _cell_index(n: int, grid: int) -> np.ndarray:
    return (np.arange(n, dtype=np.int64) * grid) // n


def structure_histogram_numpy(luma: np.ndarray) -> np.ndarray:
    h, w = luma.shape
    gx, gy = _clamped_gradients(luma)
    mag = np.hypot(gx, gy)
    angle = np.mod(np.arctan2(gy, gx), math.pi)
    bins = np.minimum(
        (angle * (STRUCTURE_BINS / math.pi)).astype(np.int64), STRUCTURE_BINS - 1
    )
    cell = (
        _cell_index(h, STRUCTURE_GRID)[:, None] * STRUCTURE_GRID
        + _cell_index(w, STRUCTURE_GRID)[None, :]
    )
    flat = cell * STRUCTURE_BINS + bins
    hist = np.bincount(
        flat.ravel(),
        weights=mag.ravel(),
        minlength=STRUCTURE_GRID * STRUCTURE_GRID * STRUCTURE_BINS,
    )
    return hist.reshape(STRUCTURE_GRID * STRUCTURE_GRID, STRUCTURE_BINS)


def color_histogram_numpy(rgb: np.ndarray) -> np.ndarray:
    h, w = rgb.shape[0], rgb.shape[1]
    chans = rgb.astype(np.float64)
    r, g, b = chans[..., 0], chans[..., 1], chans[..., 2]
    maxc = chans.max(axis=2)
    minc = chans.min(axis=2)
    v = maxc / 255.0
    delta = maxc - minc
    safe_max = np.where(maxc == 0.0, 1.0, maxc)
    s = np.where(maxc == 0.0, 0.0, delta / safe_max)
    achromatic = (s < SAT_THRESHOLD) | (v < VAL_THRESHOLD)

    safe_delta = np.where(delta == 0.0, 1.0, delta)
    h6 = np.select(
        [delta == 0.0, maxc == r, maxc == g],
        [np.zeros_like(delta), np.mod((g - b) / safe_delta, 6.0), (b - r) / safe_delta + 2.0],
        default=(r - g) / safe_delta + 4.0,
    )
    hue_idx = np.minimum((h6 / 6.0 * HUE_BINS).astype(np.int64), HUE_BINS - 1)
    val_idx = np.minimum((v * ACHROMATIC_BINS).astype(np.int64), ACHROMATIC_BINS - 1)
    bins = np.where(achromatic, val_idx, ACHROMATIC_BINS + hue_idx)

    cell = (
        _cell_index(h, COLOR_GRID)[:, None] * COLOR_GRID
        + _cell_index(w, COLOR_GRID)[None, :]
    )
    flat = cell * COLOR_BINS + bins
    hist = np.bincount(
        flat.ravel(), minlength=COLOR_GRID * COLOR_GRID * COLOR_BINS
    ).astype(np.float64)
    return hist.reshape(COLOR_GRID * COLOR_GRID, COLOR_BINS)


def active_backend() -> str:
    """Return 'numba' or 'numpy' per the env flag and numba availability."""
    if os.environ.get(PURE_NUMPY_ENV, "").strip().lower() in ("1", "true", "yes"):
        return "numpy"
    return "numba" if _HAVE_NUMBA else "numpy"


def structure_histogram(luma: np.ndarray) -> np.ndarray:
    """Gradient-magnitude histogram: 4x4 spatial cells x 8 orientation bins."""
    luma = np.ascontiguousarray(luma, dtype=np.float64)
    if active_backend() == "numba":
        return structure_histogram_numba(luma)
    return structure_histogram_numpy(luma)


def color_histogram(rgb: np.ndarray) -> np.ndarray:
    """Pixel-count histogram: 3x3 spatial cells x 21 HSV bins."""
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    if active_backend() == "numba":
        return color_histogram_numba(rgb)
    return color_histogram_numpy(rgb)
