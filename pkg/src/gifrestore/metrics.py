"""Image quality metrics and GIF artifact diagnostics."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import sparse
from scipy.ndimage import correlate1d
from scipy.sparse.csgraph import connected_components

MAX_VALUE = 255.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
FLAT_MIN_AREA = 16


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def rmse(a, b) -> float:
    a, b = _pair(a, b)
    return math.sqrt(float(np.mean((a - b) ** 2)))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB with MAX = 255; ``inf`` for identical images."""
    err = rmse(a, b)
    if err == 0.0:
        return math.inf
    return 20.0 * math.log10(MAX_VALUE / err)


def _gaussian_window() -> np.ndarray:
    x = np.arange(SSIM_WINDOW) - (SSIM_WINDOW - 1) / 2
    g = np.exp(-(x ** 2) / (2 * SSIM_SIGMA ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    half = len(win) // 2
    out = correlate1d(img, win, axis=0, mode="constant")
    out = correlate1d(out, win, axis=1, mode="constant")
    return out[half:img.shape[0] - half, half:img.shape[1] - half]


def ssim(a, b) -> float:
    """Mean SSIM over valid 11x11 Gaussian windows, averaged over channels."""
    a, b = _pair(a, b)
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ValueError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    win = _gaussian_window()
    c1 = (SSIM_K1 * MAX_VALUE) ** 2
    c2 = (SSIM_K2 * MAX_VALUE) ** 2
    scores = []
    for ch in range(a.shape[2]):
        x, y = a[..., ch], b[..., ch]
        mx, my = _filter_valid(x, win), _filter_valid(y, win)
        vx = _filter_valid(x * x, win) - mx * mx
        vy = _filter_valid(y * y, win) - my * my
        cov = _filter_valid(x * y, win) - mx * my
        num = (2 * mx * my + c1) * (2 * cov + c2)
        den = (mx * mx + my * my + c1) * (vx + vy + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


def image_gradients(img) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences along x and y with replicate padding (last difference is 0)."""
    img = np.asarray(img, dtype=np.float64)
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, :-1] = img[:, 1:] - img[:, :-1]
    gy[:-1] = img[1:] - img[:-1]
    return gx, gy


def color_l1(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean(np.abs(a - b)))


def grad_l1(a, b) -> float:
    """Mean absolute difference of image gradients over both directions."""
    a, b = _pair(a, b)
    ax, ay = image_gradients(a)
    bx, by = image_gradients(b)
    return float((np.mean(np.abs(ax - bx)) + np.mean(np.abs(ay - by))) / 2)


def flat_region_stats(img, min_area: int = FLAT_MIN_AREA) -> tuple[int, float]:
    """Count 4-connected equal-color regions with area >= ``min_area`` and their coverage."""
    img = np.asarray(img)
    if img.size == 0:
        raise ValueError("empty image")
    if img.ndim == 2:
        img = img[..., None]
    h, w = img.shape[:2]
    flat = img.reshape(h * w, -1)
    _, keys = np.unique(flat, axis=0, return_inverse=True)
    keys = keys.reshape(h, w)
    ids = np.arange(h * w).reshape(h, w)
    right = keys[:, :-1] == keys[:, 1:]
    down = keys[:-1] == keys[1:]
    rows = np.concatenate([ids[:, :-1][right], ids[:-1][down]])
    cols = np.concatenate([ids[:, 1:][right], ids[1:][down]])
    graph = sparse.coo_matrix((np.ones(len(rows), np.int8), (rows, cols)), shape=(h * w, h * w))
    _, labels = connected_components(graph, directed=False)
    areas = np.bincount(labels)
    big = areas >= min_area
    return int(big.sum()), float(areas[big].sum() / (h * w))


@dataclass
class QualityReport:
    psnr: float
    ssim: float
    color_l1: float
    grad_l1: float
    flat_region_count: int
    flat_coverage: float

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(self.psnr):
            d["psnr"] = "inf"
        return d


def quality_report(estimate, reference) -> QualityReport:
    """Score ``estimate`` against ``reference``; flat-region stats describe ``estimate``."""
    count, coverage = flat_region_stats(np.asarray(estimate))
    return QualityReport(
        psnr=psnr(estimate, reference),
        ssim=ssim(estimate, reference),
        color_l1=color_l1(estimate, reference),
        grad_l1=grad_l1(estimate, reference),
        flat_region_count=count,
        flat_coverage=coverage,
    )


def mean_report(reports: list[QualityReport]) -> dict:
    """Field-wise arithmetic mean of per-frame reports."""
    if not reports:
        raise ValueError("no reports to average")
    fields = ("psnr", "ssim", "color_l1", "grad_l1", "flat_region_count", "flat_coverage")
    return {f: float(np.mean([getattr(r, f) for r in reports])) for f in fields}


def video_mean(per_video: list[list[float]]) -> float:
    """Average within each video first, then across videos."""
    return float(np.mean([np.mean(v) for v in per_video]))


def reports_to_json(reports: list[QualityReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2)


def reports_to_csv(reports: list[QualityReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(QualityReport.__dataclass_fields__), lineterminator="\n")
    writer.writeheader()
    for r in reports:
        writer.writerow(r.to_dict())
    return buf.getvalue()
