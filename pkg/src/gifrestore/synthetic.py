"""Deterministic synthetic scenes and clips for fixtures and sweeps.

Scenes are sums of a few random low-frequency cosines per channel, so a
translated copy can be sampled exactly at any sub-pixel offset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class CosineScene:
    """RGB field sum_k amp_k * cos(2 pi (fx_k x + fy_k y) / size + phase_k) + base."""

    base: np.ndarray        # (3,)
    amps: np.ndarray        # (3, K)
    freqs: np.ndarray       # (3, K, 2) cycles per image size, (fx, fy)
    phases: np.ndarray      # (3, K)
    size: float

    def render(self, h: int, w: int, dx: float = 0.0, dy: float = 0.0) -> np.ndarray:
        """Sample the scene translated by (dx, dy) pixels; float64 in [0, 255]."""
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        xs = (xx - dx) / self.size
        ys = (yy - dy) / self.size
        img = np.empty((h, w, 3))
        for c in range(3):
            v = np.full((h, w), self.base[c])
            for k in range(self.amps.shape[1]):
                fx, fy = self.freqs[c, k]
                v += self.amps[c, k] * np.cos(2 * np.pi * (fx * xs + fy * ys) + self.phases[c, k])
            img[..., c] = v
        return np.clip(img, 0.0, 255.0)


def random_scene(rng: np.random.Generator, size: float = 64.0, components: int = 3,
                 max_freq: float = 1.5, amp_range: tuple[float, float] = (15.0, 45.0)) -> CosineScene:
    return CosineScene(
        base=rng.uniform(60, 190, 3),
        amps=rng.uniform(*amp_range, (3, components)),
        freqs=rng.uniform(-max_freq, max_freq, (3, components, 2)),
        phases=rng.uniform(0, 2 * np.pi, (3, components)),
        size=size,
    )


def smooth_scene(rng: np.random.Generator, h: int = 64, w: int = 64) -> np.ndarray:
    """A low-frequency color image."""
    return random_scene(rng, size=max(h, w)).render(h, w)


def textured_scene(rng: np.random.Generator, size: float = 64.0) -> CosineScene:
    """Higher-frequency scene with enough gradient everywhere for flow estimation."""
    return random_scene(rng, size=size, components=6, max_freq=4.0, amp_range=(10.0, 30.0))


def moving_clip(scene: CosineScene, n_frames: int, h: int, w: int,
                velocity: tuple[float, float]) -> list[np.ndarray]:
    """Frames of ``scene`` translating by ``velocity`` pixels per frame."""
    vx, vy = velocity
    return [scene.render(h, w, k * vx, k * vy) for k in range(n_frames)]


def ramp_image(h: int, w: int, lo: float = 0.0, hi: float = 255.0) -> np.ndarray:
    """Horizontal gray ramp."""
    row = np.linspace(lo, hi, w)
    return np.repeat(np.repeat(row[None, :, None], h, axis=0), 3, axis=2)
