"""Palette construction, nearest-color quantization and Floyd-Steinberg dithering.

Images are numpy arrays of shape (H, W, 3): uint8 for stored frames, float64
in [0, 255] for working buffers. A palette is an (N, 3) uint8 array of
pairwise distinct colors, 1 <= N <= 256.
"""

from __future__ import annotations

import numpy as np

from .errors import PaletteMismatchError
from .imageio import to_uint8

# pixels per chunk in quantize_indices is chosen so chunk * N stays near this
_CHUNK_ELEMENTS = 1 << 20


def validate_palette(palette) -> np.ndarray:
    pal = np.asarray(palette)
    if pal.ndim != 2 or pal.shape[1] != 3:
        raise ValueError(f"palette must have shape (N, 3), got {pal.shape}")
    if not 1 <= len(pal) <= 256:
        raise ValueError(f"palette size must be in [1, 256], got {len(pal)}")
    if np.any(pal < 0) or np.any(pal > 255) or not np.all(pal == np.round(pal)):
        raise ValueError("palette entries must be integers in [0, 255]")
    pal = pal.astype(np.uint8)
    if len(np.unique(pal, axis=0)) != len(pal):
        raise ValueError("palette colors must be pairwise distinct")
    return pal


def _sqdist(px: np.ndarray, pal: np.ndarray) -> np.ndarray:
    # explicit per-channel sum keeps the rounding identical to a scalar loop
    return ((px[:, None, 0] - pal[None, :, 0]) ** 2
            + (px[:, None, 1] - pal[None, :, 1]) ** 2
            + (px[:, None, 2] - pal[None, :, 2]) ** 2)


def quantize_indices(image: np.ndarray, palette: np.ndarray) -> np.ndarray:
    """Index of the nearest palette color per pixel; ties go to the lowest index."""
    pal = np.asarray(palette, dtype=np.float64)
    img = np.asarray(image, dtype=np.float64)
    shape = img.shape[:-1]
    px = img.reshape(-1, 3)
    out = np.empty(len(px), dtype=np.intp)
    step = max(1, _CHUNK_ELEMENTS // len(pal))
    for start in range(0, len(px), step):
        out[start:start + step] = np.argmin(_sqdist(px[start:start + step], pal), axis=1)
    return out.reshape(shape)


def quantize(image: np.ndarray, palette: np.ndarray) -> np.ndarray:
    """Map every pixel to its nearest palette color (uint8 output)."""
    pal = np.asarray(palette, dtype=np.uint8)
    return pal[quantize_indices(image, pal)]


def quantize_index(color, palette: np.ndarray) -> int:
    return int(quantize_indices(np.asarray(color, dtype=np.float64).reshape(1, 3), palette)[0])


def cell_contains(palette: np.ndarray, index: int, color) -> bool:
    """True iff ``color`` quantizes to ``palette[index]`` (tie-break included)."""
    if not 0 <= index < len(palette):
        raise IndexError(f"palette index {index} out of range for {len(palette)} colors")
    return quantize_index(color, palette) == index


def palette_indices(image: np.ndarray, palette: np.ndarray) -> np.ndarray:
    """Exact inverse lookup of palette colors.

    Raises PaletteMismatchError if some pixel is not a palette member.
    """
    pal = np.asarray(palette, dtype=np.uint8)
    img = np.asarray(image)
    if img.dtype != np.uint8:
        if not np.all(img == np.round(img)):
            raise PaletteMismatchError("image has non-integer pixels, so it is not a palette image")
        img = img.astype(np.uint8)
    keys = (img[..., 0].astype(np.int64) << 16) | (img[..., 1].astype(np.int64) << 8) | img[..., 2]
    pal_keys = (pal[:, 0].astype(np.int64) << 16) | (pal[:, 1].astype(np.int64) << 8) | pal[:, 2]
    order = np.argsort(pal_keys, kind="stable")
    sorted_keys = pal_keys[order]
    pos = np.clip(np.searchsorted(sorted_keys, keys), 0, len(pal) - 1)
    found = sorted_keys[pos] == keys
    if not np.all(found):
        n_bad = int(np.count_nonzero(~found))
        raise PaletteMismatchError(f"{n_bad} pixel(s) are not members of the palette")
    return order[pos]


def median_cut_palette(image: np.ndarray, n: int) -> np.ndarray:
    """Median-cut palette with at most ``n`` colors.

    The box holding the most pixels is split along its widest channel at the
    pixel-count median; the median pixel's value goes to the lower box. Each
    box contributes its rounded mean color. The result is sorted
    lexicographically.
    """
    if n < 1:
        raise ValueError(f"palette size must be >= 1, got {n}")
    px = to_uint8(np.asarray(image)).reshape(-1, 3)
    if len(px) == 0:
        raise ValueError("cannot build a palette from an empty image")
    colors, counts = np.unique(px, axis=0, return_counts=True)
    boxes = [(colors, counts)]

    while len(boxes) < n:
        best, best_total = -1, -1
        for i, (c, k) in enumerate(boxes):
            if len(c) > 1:
                total = int(k.sum())
                if total > best_total:
                    best, best_total = i, total
        if best < 0:
            break
        c, k = boxes[best]
        channel = int(np.argmax(c.max(axis=0).astype(int) - c.min(axis=0)))
        order = np.argsort(c[:, channel], kind="stable")
        c, k = c[order], k[order]
        cum = np.cumsum(k)
        median_pos = (cum[-1] - 1) // 2
        split_value = c[np.searchsorted(cum, median_pos, side="right"), channel]
        lower = c[:, channel] <= split_value
        if lower.all():
            lower = c[:, channel] < split_value
        boxes[best] = (c[lower], k[lower])
        boxes.insert(best + 1, (c[~lower], k[~lower]))

    means = np.array([(c * k[:, None]).sum(axis=0) / k.sum() for c, k in boxes])
    palette = np.floor(means + 0.5).astype(np.uint8)
    return palette[np.lexsort(palette.T[::-1])]


def dither_indices(image: np.ndarray, palette: np.ndarray) -> np.ndarray:
    pal = np.asarray(palette, dtype=np.uint8)
    p0, p1, p2 = (pal[:, c].astype(np.float64) for c in range(3))
    buf = np.array(image, dtype=np.float64)
    h, w = buf.shape[:2]
    out = np.empty((h, w), dtype=np.intp)
    rows = buf.tolist()  # plain floats are much faster to index than numpy scalars
    palf = pal.astype(np.float64).tolist()

    for y in range(h):
        row = rows[y]
        below = rows[y + 1] if y + 1 < h else None
        for x in range(w):
            r, g, b = row[x]
            cr = min(max(r, 0.0), 255.0)
            cg = min(max(g, 0.0), 255.0)
            cb = min(max(b, 0.0), 255.0)
            idx = int(np.argmin((cr - p0) ** 2 + (cg - p1) ** 2 + (cb - p2) ** 2))
            out[y, x] = idx
            q = palf[idx]
            er, eg, eb = r - q[0], g - q[1], b - q[2]
            if x + 1 < w:
                _add(row[x + 1], er, eg, eb, 7 / 16)
            if below is not None:
                if x > 0:
                    _add(below[x - 1], er, eg, eb, 3 / 16)
                _add(below[x], er, eg, eb, 5 / 16)
                if x + 1 < w:
                    _add(below[x + 1], er, eg, eb, 1 / 16)
    return out


def _add(px: list, er: float, eg: float, eb: float, weight: float) -> None:
    px[0] += er * weight
    px[1] += eg * weight
    px[2] += eb * weight


def dither_floyd_steinberg(image: np.ndarray, palette: np.ndarray) -> np.ndarray:
    """Floyd-Steinberg error diffusion onto ``palette``, raster scan order.

    The accumulated error is kept unclamped; only the nearest-color lookup
    sees values clamped to [0, 255].
    """
    pal = np.asarray(palette, dtype=np.uint8)
    return pal[dither_indices(image, pal)]
