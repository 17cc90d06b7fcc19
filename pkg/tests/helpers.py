"""Shared fixture builders and brute-force oracles for the test suite."""

from __future__ import annotations

import numpy as np

from gifrestore import synthetic

# one "PASS|FAIL name: detail" line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def random_palette(rng: np.random.Generator, n: int) -> np.ndarray:
    keys = rng.choice(1 << 24, n, replace=False)
    return np.stack([(keys >> 16) & 255, (keys >> 8) & 255, keys & 255], axis=1).astype(np.uint8)


def brute_force_quantize(img: np.ndarray, pal: np.ndarray) -> np.ndarray:
    """Per-pixel exhaustive search in plain Python; first minimum wins."""
    h, w = img.shape[:2]
    out = np.empty((h, w, 3), np.uint8)
    colors = [tuple(int(v) for v in c) for c in pal]
    for y in range(h):
        for x in range(w):
            r, g, b = (float(v) for v in img[y, x])
            best, best_d = 0, None
            for i, (pr, pg, pb) in enumerate(colors):
                d = (r - pr) ** 2 + (g - pg) ** 2 + (b - pb) ** 2
                if best_d is None or d < best_d:
                    best, best_d = i, d
            out[y, x] = colors[best]
    return out


def smooth_fixture(rng: np.random.Generator, h: int = 64, w: int = 64) -> np.ndarray:
    """Low-frequency continuous-tone scene as float64 in [0, 255]."""
    return synthetic.smooth_scene(rng, h, w)


def translation_fixture(seed: int = 0, size: int = 64, shift: float = 2.0):
    """Textured frame pair translated by (shift, 0) plus the true middle frame."""
    scene = synthetic.textured_scene(np.random.default_rng(seed), size=size)
    return (scene.render(size, size), scene.render(size, size, shift, 0.0),
            scene.render(size, size, shift / 2, 0.0))


def motion_clips(n_clips: int = 3, n_frames: int = 17, size: int = 48, seed: int = 0,
                 velocity=(1.0, 0.5)):
    from gifrestore import imageio, pipeline
    rng = np.random.default_rng(seed)
    clips = []
    for k in range(n_clips):
        scene = synthetic.textured_scene(rng)
        frames = [imageio.to_uint8(f) for f in synthetic.moving_clip(scene, n_frames, size, size, velocity)]
        clips.append((f"clip{k:02d}", frames, pipeline.clip_palette(frames, 32)))
    return clips


def router_frames(rng: np.random.Generator, n_scenes: int, size: int = 32):
    """Dithered and non-dithered versions of alternating smooth and textured scenes."""
    from gifrestore import ditherdetect, quant
    from gifrestore.dequant import DITHERED, NON_DITHERED
    pairs = []
    for i in range(n_scenes):
        if i % 2:
            img = synthetic.smooth_scene(rng, size, size)
        else:
            img = synthetic.textured_scene(rng, size).render(size, size)
        pal = quant.median_cut_palette(img, 32)
        pairs.append((ditherdetect.extract_features(quant.quantize(img, pal)), NON_DITHERED))
        pairs.append((ditherdetect.extract_features(quant.dither_floyd_steinberg(img, pal)), DITHERED))
    return pairs


def dither_with_leak(img: np.ndarray, pal: np.ndarray):
    """Error diffusion that also totals the error pushed past the image border."""
    buf = img.astype(np.float64).copy()
    h, w = buf.shape[:2]
    leak = np.zeros(3)
    for y in range(h):
        for x in range(w):
            q = brute_force_quantize(np.clip(buf[y:y + 1, x:x + 1], 0, 255), pal)[0, 0].astype(np.float64)
            err = buf[y, x] - q
            buf[y, x] = q
            for dy, dx, wt in ((0, 1, 7), (1, -1, 3), (1, 0, 5), (1, 1, 1)):
                yy, xx = y + dy, x + dx
                if yy < h and 0 <= xx < w:
                    buf[yy, xx] += err * wt / 16
                else:
                    leak += err * wt / 16
    return buf.astype(np.uint8), leak
