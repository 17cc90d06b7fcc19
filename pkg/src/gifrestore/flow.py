"""Dense optical flow and flow-based frame interpolation.

Flow fields are (H, W, 2) float arrays holding (dx, dy) in pixels. Flow is
estimated with a coarse-to-fine Horn-Schunck solver on luminance; in-between
frames are synthesized by backward warping both endpoints along
time-scaled flows and blending them with forward-backward consistency
weights.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import correlate, gaussian_filter, map_coordinates

MIN_SIZE = 16
DENOM_FLOOR = 1e-6
# lower bound on blend weights; keeps the endpoint frames exact when the
# consistency error is large
WEIGHT_FLOOR = 1e-3

_HS_KERNEL = np.array([[1, 2, 1], [2, 0, 2], [1, 2, 1]], dtype=np.float64) / 12.0


@dataclass
class FlowConfig:
    levels: int = 4
    alpha: float = 15.0
    iterations: int = 100
    sigma_w: float = 8.0

    def to_dict(self) -> dict:
        return asdict(self)


def luminance(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def _sample(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear lookup with edge clamping; exact at integer positions."""
    h, w = img.shape[:2]
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    if img.ndim == 3:
        fy = fy[..., None]
        fx = fx[..., None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def backward_warp(img: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """out(x) = img(x + flow(x)) with bilinear sampling and clamped borders."""
    img = np.asarray(img, dtype=np.float64)
    flow = np.asarray(flow, dtype=np.float64)
    h, w = img.shape[:2]
    if flow.shape[:2] != (h, w):
        raise ValueError(f"flow shape {flow.shape[:2]} does not match image {(h, w)}")
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return _sample(img, yy + flow[..., 1], xx + flow[..., 0])


def _downsample(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    smooth = gaussian_filter(img, 1.0, mode="nearest")
    oh, ow = (h + 1) // 2, (w + 1) // 2
    yy, xx = np.mgrid[0:oh, 0:ow].astype(np.float64)
    return map_coordinates(smooth, [2 * yy + 0.5, 2 * xx + 0.5], order=1, mode="nearest")


def _upsample_flow(flow: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    coords = [(yy + 0.5) / 2 - 0.5, (xx + 0.5) / 2 - 0.5]
    out = np.empty((h, w, 2))
    for c in range(2):
        out[..., c] = 2.0 * map_coordinates(flow[..., c], coords, order=1, mode="nearest")
    return out


def _horn_schunck_level(i0: np.ndarray, i1: np.ndarray, flow: np.ndarray,
                        alpha: float, iterations: int) -> np.ndarray:
    warped = backward_warp(i1, flow)
    gy0, gx0 = np.gradient(i0)
    gy1, gx1 = np.gradient(warped)
    ix = (gx0 + gx1) / 2
    iy = (gy0 + gy1) / 2
    it = warped - i0
    u0, v0 = flow[..., 0], flow[..., 1]
    u, v = u0.copy(), v0.copy()
    denom = alpha ** 2 + ix ** 2 + iy ** 2
    for _ in range(iterations):
        ub = correlate(u, _HS_KERNEL, mode="nearest")
        vb = correlate(v, _HS_KERNEL, mode="nearest")
        p = (ix * (ub - u0) + iy * (vb - v0) + it) / denom
        u = ub - ix * p
        v = vb - iy * p
    return np.stack([u, v], axis=-1)


def estimate_flow(i0: np.ndarray, i1: np.ndarray, levels: int = 4, alpha: float = 15.0,
                  iterations: int = 100) -> np.ndarray:
    """Flow from ``i0`` to ``i1``: ``i0(x) ~ i1(x + flow(x))``.

    The pyramid stops early once a level would drop below 8 pixels.
    """
    i0 = np.asarray(i0)
    i1 = np.asarray(i1)
    if i0.shape != i1.shape:
        raise ValueError(f"frame shapes differ: {i0.shape} vs {i1.shape}")
    if i0.shape[0] < MIN_SIZE or i0.shape[1] < MIN_SIZE:
        raise ValueError(f"flow estimation needs frames of at least {MIN_SIZE}x{MIN_SIZE}")
    if levels < 1:
        raise ValueError("levels must be >= 1")

    pyr0 = [gaussian_filter(luminance(i0), 1.0, mode="nearest")]
    pyr1 = [gaussian_filter(luminance(i1), 1.0, mode="nearest")]
    while len(pyr0) < levels and min(pyr0[-1].shape) >= 16:
        pyr0.append(_downsample(pyr0[-1]))
        pyr1.append(_downsample(pyr1[-1]))

    flow = np.zeros(pyr0[-1].shape + (2,))
    for lvl in range(len(pyr0) - 1, -1, -1):
        if flow.shape[:2] != pyr0[lvl].shape:
            flow = _upsample_flow(flow, pyr0[lvl].shape)
        flow = _horn_schunck_level(pyr0[lvl], pyr1[lvl], flow, alpha, iterations)
    return flow


def estimate_flow_cfg(i0, i1, cfg: FlowConfig | None = None) -> np.ndarray:
    cfg = cfg or FlowConfig()
    return estimate_flow(i0, i1, cfg.levels, cfg.alpha, cfg.iterations)


def intermediate_flows(f01: np.ndarray, f10: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Approximate flows from time ``t`` back to frame 0 and forward to frame 1."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    f01 = np.asarray(f01, dtype=np.float64)
    f10 = np.asarray(f10, dtype=np.float64)
    if f01.shape != f10.shape:
        raise ValueError("flow fields differ in shape")
    ft0 = -(1 - t) * t * f01 + t * t * f10
    ft1 = (1 - t) * (1 - t) * f01 - t * (1 - t) * f10
    return ft0, ft1


def consistency_error(f_ab: np.ndarray, f_ba: np.ndarray) -> np.ndarray:
    """|f_ab(x) + f_ba(x + f_ab(x))| on the grid of frame a."""
    back = backward_warp(f_ba, f_ab)
    return np.sqrt(np.sum((f_ab + back) ** 2, axis=-1))


def synthesize_frame(i0: np.ndarray, i1: np.ndarray, f01: np.ndarray, f10: np.ndarray,
                     t: float, sigma_w: float = 8.0) -> np.ndarray:
    """Frame at time ``t`` between ``i0`` and ``i1`` (float64 output)."""
    ft0, ft1 = intermediate_flows(f01, f10, t)
    i0 = np.asarray(i0, dtype=np.float64)
    i1 = np.asarray(i1, dtype=np.float64)
    e0 = backward_warp(consistency_error(f01, f10), ft0)
    e1 = backward_warp(consistency_error(f10, f01), ft1)
    w0 = np.maximum(np.exp(-e0 / sigma_w), WEIGHT_FLOOR)[..., None]
    w1 = np.maximum(np.exp(-e1 / sigma_w), WEIGHT_FLOOR)[..., None]
    num = (1 - t) * w0 * backward_warp(i0, ft0) + t * w1 * backward_warp(i1, ft1)
    den = np.maximum((1 - t) * w0 + t * w1, DENOM_FLOOR)
    return num / den


def interpolate_pair(i0, i1, factor: int, flow_pair=None, cfg: FlowConfig | None = None,
                     flows: tuple[np.ndarray, np.ndarray] | None = None) -> list[np.ndarray]:
    """The ``factor - 1`` in-between frames at t = j / factor.

    Flow is estimated on ``flow_pair`` when given (e.g. the raw GIF frames),
    otherwise on the frames being warped.
    """
    cfg = cfg or FlowConfig()
    if flows is None:
        a, b = flow_pair if flow_pair is not None else (i0, i1)
        flows = estimate_flow_cfg(a, b, cfg), estimate_flow_cfg(b, a, cfg)
    f01, f10 = flows
    return [synthesize_frame(i0, i1, f01, f10, j / factor, cfg.sigma_w) for j in range(1, factor)]


def interpolate_sequence(frames: list[np.ndarray], factor: int,
                         flow_frames: list[np.ndarray] | None = None,
                         cfg: FlowConfig | None = None,
                         flows: list[tuple[np.ndarray, np.ndarray]] | None = None) -> list[np.ndarray]:
    """Insert ``factor - 1`` frames between each consecutive pair.

    Output length is ``(len(frames) - 1) * factor + 1``; original frames are
    passed through untouched. Flow comes from ``flows`` if given, else it is
    estimated on ``flow_frames`` (default: ``frames``).
    """
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if len(frames) < 2:
        raise ValueError("need at least two frames to interpolate")
    if flow_frames is not None and len(flow_frames) != len(frames):
        raise ValueError("flow_frames must match frames one to one")
    if flows is not None and len(flows) != len(frames) - 1:
        raise ValueError("need one flow pair per consecutive frame pair")
    if factor == 1:
        return [np.array(f, copy=True) for f in frames]
    out: list[np.ndarray] = []
    for k in range(len(frames) - 1):
        pair = None if flow_frames is None else (flow_frames[k], flow_frames[k + 1])
        out.append(np.array(frames[k], copy=True))
        out.extend(interpolate_pair(frames[k], frames[k + 1], factor, pair, cfg,
                                    flows=None if flows is None else flows[k]))
    out.append(np.array(frames[-1], copy=True))
    return out


def pair_flows(frames: list[np.ndarray], cfg: FlowConfig | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
    """Forward and backward flow for every consecutive pair."""
    cfg = cfg or FlowConfig()
    return [(estimate_flow_cfg(a, b, cfg), estimate_flow_cfg(b, a, cfg))
            for a, b in zip(frames[:-1], frames[1:])]
