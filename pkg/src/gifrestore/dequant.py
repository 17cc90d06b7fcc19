"""Compositional iterative color dequantization.

Starting from the GIF frame itself, the loop alternates between
re-quantizing the current estimate and asking an update operator for a
correction:

    G_t   = quantize(I_t, palette)               (non-dithered mode only)
    dI    = op(I_t, G, G_t, G - G_t)
    I_t+1 = clip(I_t + dI, 0, 255)

With ``constraint="hard"`` every pixel is pulled back into the quantization
cell of its observed color after each step, so the result always
re-quantizes to the input frame.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Protocol

import numpy as np

from . import quant
from .errors import ConfigError, PaletteMismatchError

NON_DITHERED = "non-dithered"
DITHERED = "dithered"
MODES = (NON_DITHERED, DITHERED)

RETRACT_TOLERANCE = 0.25


@dataclass
class DequantConfig:
    unfold_steps: int = 2
    mode: str = NON_DITHERED
    operator: str = "smoothing"
    smoothness_weight: float = 1.0
    step_size: float = 0.5
    inner_iterations: int = 5
    constraint: str = "hard"
    convergence_tol: float = 0.01

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.unfold_steps < 1:
            raise ConfigError("unfold_steps must be >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.operator not in OPERATORS:
            raise ConfigError(f"operator must be one of {sorted(OPERATORS)}, got {self.operator!r}")
        if self.constraint not in ("hard", "off"):
            raise ConfigError(f"constraint must be 'hard' or 'off', got {self.constraint!r}")
        if self.constraint == "hard" and self.mode == DITHERED:
            raise ConfigError("the hard quantization constraint is undefined for dithered frames")
        if self.operator == "residual" and self.mode == DITHERED:
            raise ConfigError("the residual operator needs the re-quantized estimate; "
                              "it cannot run in dithered mode")
        if self.step_size <= 0:
            raise ConfigError("step_size must be positive")
        if self.smoothness_weight < 0:
            raise ConfigError("smoothness_weight must be nonnegative")
        if self.inner_iterations < 0:
            raise ConfigError("inner_iterations must be nonnegative")
        if self.convergence_tol < 0:
            raise ConfigError("convergence_tol must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


class UpdateOperator(Protocol):
    """Computes the correction ``dI`` for the current estimate.

    In dithered mode ``g_t`` and ``residual`` are ``None``.
    """

    def __call__(self, i_t: np.ndarray, g: np.ndarray,
                 g_t: np.ndarray | None, residual: np.ndarray | None) -> np.ndarray: ...


# ---- smoothness energy ---------------------------------------------------

def smoothness_energy(img: np.ndarray) -> float:
    """Sum of squared forward differences (replicate padding) over x, y and channels."""
    img = np.asarray(img, dtype=np.float64)
    dx = np.diff(img, axis=1)
    dy = np.diff(img, axis=0)
    return float(np.sum(dx * dx) + np.sum(dy * dy))


def smoothness_gradient(img: np.ndarray) -> np.ndarray:
    """Analytic gradient of :func:`smoothness_energy`, i.e. 2 * D^T D img."""
    img = np.asarray(img, dtype=np.float64)
    grad = np.zeros_like(img)
    dx = np.diff(img, axis=1)
    dy = np.diff(img, axis=0)
    grad[:, :-1] -= dx
    grad[:, 1:] += dx
    grad[:-1] -= dy
    grad[1:] += dy
    return 2.0 * grad


# Lipschitz constant of smoothness_gradient: 2 * (max eigenvalue 8 of the grid Laplacian)
SMOOTHNESS_LIPSCHITZ = 16.0


class ConstrainedSmoothing:
    """Gradient descent on the smoothness energy, started at the current estimate.

    ``step_size`` is relative to the largest monotone step 2 / L, so values
    in (0, 1) decrease the energy at every inner iteration.
    """

    def __init__(self, step_size: float = 0.5, inner_iterations: int = 5,
                 smoothness_weight: float = 1.0, convergence_tol: float = 0.0) -> None:
        self.step = smoothness_weight * step_size * 2.0 / SMOOTHNESS_LIPSCHITZ
        self.inner_iterations = inner_iterations
        self.convergence_tol = convergence_tol

    def __call__(self, i_t, g, g_t=None, residual=None) -> np.ndarray:
        start = np.asarray(i_t, dtype=np.float64)
        cur = start.copy()
        for _ in range(self.inner_iterations):
            delta = -self.step * smoothness_gradient(cur)
            cur += delta
            if self.convergence_tol and np.mean(np.abs(delta)) < self.convergence_tol:
                break
        return cur - start

    def trace(self, i_t) -> list[float]:
        """Energies visited by the inner iterations, for diagnostics."""
        cur = np.asarray(i_t, dtype=np.float64).copy()
        out = [smoothness_energy(cur)]
        for _ in range(self.inner_iterations):
            cur -= self.step * smoothness_gradient(cur)
            out.append(smoothness_energy(cur))
        return out


class ResidualStep:
    """dI = step_size * (G - G_t): the Lucas-Kanade update with an identity Jacobian."""

    def __init__(self, step_size: float = 0.5) -> None:
        self.step_size = step_size

    def __call__(self, i_t, g, g_t=None, residual=None) -> np.ndarray:
        if residual is None:
            if g_t is None:
                raise ValueError("the residual operator needs the re-quantized estimate "
                                 "(unavailable in dithered mode)")
            residual = np.asarray(g, np.float64) - np.asarray(g_t, np.float64)
        return self.step_size * np.asarray(residual, dtype=np.float64)


OPERATORS = {"smoothing": ConstrainedSmoothing, "residual": ResidualStep}


def make_operator(cfg: DequantConfig) -> UpdateOperator:
    if cfg.operator == "smoothing":
        return ConstrainedSmoothing(cfg.step_size, cfg.inner_iterations,
                                    cfg.smoothness_weight, cfg.convergence_tol)
    return ResidualStep(cfg.step_size)


# ---- feasibility restoration ---------------------------------------------

def retract_image(img: np.ndarray, palette: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Pull each pixel of ``img`` into the cell of ``palette[target]``.

    Feasible pixels are returned unchanged. Others are moved along the
    segment towards their target color, bisecting until the feasible end of
    the bracket lies within RETRACT_TOLERANCE levels of the infeasible end.
    """
    pal = np.asarray(palette, dtype=np.uint8)
    img = np.asarray(img, dtype=np.float64)
    target = np.asarray(target)
    out = img.copy()
    flat = out.reshape(-1, 3)
    tgt = target.reshape(-1)
    bad = np.flatnonzero(quant.quantize_indices(flat, pal) != tgt)
    if bad.size == 0:
        return out

    start = flat[bad]
    center = pal[tgt[bad]].astype(np.float64)
    seg = center - start
    length = np.sqrt(np.sum(seg * seg, axis=1))
    lo = np.zeros(len(bad))   # infeasible
    hi = np.ones(len(bad))    # feasible: a palette color is inside its own cell
    active = (hi - lo) * length > RETRACT_TOLERANCE
    while np.any(active):
        idx = np.flatnonzero(active)
        mid = (lo[idx] + hi[idx]) / 2
        points = start[idx] + mid[:, None] * seg[idx]
        ok = quant.quantize_indices(points, pal) == tgt[bad[idx]]
        hi[idx[ok]] = mid[ok]
        lo[idx[~ok]] = mid[~ok]
        active[idx] = (hi[idx] - lo[idx]) * length[idx] > RETRACT_TOLERANCE
    flat[bad] = start + hi[:, None] * seg
    return out


def cell_retract(pixel, palette: np.ndarray, target_index: int) -> np.ndarray:
    """Single-pixel form of :func:`retract_image`."""
    if not 0 <= target_index < len(palette):
        raise IndexError(f"palette index {target_index} out of range")
    px = np.asarray(pixel, dtype=np.float64).reshape(1, 1, 3)
    return retract_image(px, palette, np.array([[target_index]]))[0, 0]


def feasible_uint8(img: np.ndarray, palette: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Round to 8 bits without leaving the target cells.

    Pixels whose rounded value changes cell try the other floor/ceil corners
    (nearest first) and fall back to the palette color itself.
    """
    pal = np.asarray(palette, dtype=np.uint8)
    img = np.clip(np.asarray(img, dtype=np.float64), 0, 255)
    out = np.floor(img + 0.5)
    flat = out.reshape(-1, 3)
    src = img.reshape(-1, 3)
    tgt = np.asarray(target).reshape(-1)
    bad = np.flatnonzero(quant.quantize_indices(flat, pal) != tgt)
    if bad.size:
        lo = np.floor(src[bad])
        hi = np.minimum(lo + 1, 255)
        corners = np.array([[i >> 2 & 1, i >> 1 & 1, i & 1] for i in range(8)], dtype=bool)
        cands = np.where(corners[None], hi[:, None], lo[:, None])  # (n, 8, 3)
        dist = np.sum((cands - src[bad][:, None]) ** 2, axis=2)
        order = np.argsort(dist, axis=1, kind="stable")
        chosen = pal[tgt[bad]].astype(np.float64)
        done = np.zeros(len(bad), bool)
        for k in range(8):
            pick = cands[np.arange(len(bad)), order[:, k]]
            ok = (quant.quantize_indices(pick, pal) == tgt[bad]) & ~done
            chosen[ok] = pick[ok]
            done |= ok
        flat[bad] = chosen
    return out.astype(np.uint8)


# ---- main loop -----------------------------------------------------------

def dequantize(g_img: np.ndarray, palette: np.ndarray, cfg: DequantConfig | None = None,
               op: UpdateOperator | None = None) -> np.ndarray:
    """Restore a continuous-tone estimate of a quantized frame.

    Returns a float64 image in [0, 255]. In non-dithered mode with the hard
    constraint, ``quantize(result, palette)`` equals ``g_img`` exactly.
    """
    cfg = cfg or DequantConfig()
    cfg.validate()
    op = op or make_operator(cfg)
    pal = np.asarray(palette, dtype=np.uint8)
    g = np.asarray(g_img)
    g_float = g.astype(np.float64)

    target = None
    if cfg.mode == NON_DITHERED:
        target = quant.palette_indices(g, pal)
    elif cfg.constraint == "hard":
        raise ConfigError("the hard quantization constraint is undefined for dithered frames")

    cur = g_float.copy()
    for _ in range(cfg.unfold_steps):
        if cfg.mode == NON_DITHERED:
            g_t = quant.quantize(cur, pal).astype(np.float64)
            delta = op(cur, g_float, g_t, g_float - g_t)
        else:
            delta = op(cur, g_float, None, None)
        if delta.shape != cur.shape:
            raise ValueError(f"update has shape {delta.shape}, expected {cur.shape}")
        cur = np.clip(cur + delta, 0.0, 255.0)
        if cfg.constraint == "hard":
            cur = retract_image(cur, pal, target)
    return cur


def dequantize_uint8(g_img: np.ndarray, palette: np.ndarray, cfg: DequantConfig | None = None,
                     op: UpdateOperator | None = None) -> np.ndarray:
    """:func:`dequantize` followed by an 8-bit rounding that keeps the constraint."""
    cfg = cfg or DequantConfig()
    out = dequantize(g_img, palette, cfg, op)
    if cfg.mode == NON_DITHERED and cfg.constraint == "hard":
        return feasible_uint8(out, palette, quant.palette_indices(g_img, palette))
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


__all__ = [
    "DequantConfig", "UpdateOperator", "ConstrainedSmoothing", "ResidualStep",
    "dequantize", "dequantize_uint8", "cell_retract", "retract_image", "feasible_uint8",
    "smoothness_energy", "smoothness_gradient", "make_operator", "PaletteMismatchError",
]
