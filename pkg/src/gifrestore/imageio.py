"""Frame and flow-field files: PNG (via Pillow), binary PPM and Middlebury .flo."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageFormatError

FLO_MAGIC = 202021.25
FRAME_SUFFIXES = (".png", ".ppm")


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Round a working buffer to 8 bits (half away from zero, clamped)."""
    if img.dtype == np.uint8:
        return img
    return np.clip(np.floor(np.asarray(img, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


def read_ppm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    # header: magic, width, height, maxval, each separated by whitespace; comments allowed
    tokens = []
    pos = 0
    token_re = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)")
    for _ in range(4):
        m = token_re.match(data, pos)
        if m is None:
            raise ImageFormatError(f"{path}: truncated PPM header")
        tokens.append(m.group(2))
        pos = m.end()
    if tokens[0] != b"P6":
        raise ImageFormatError(f"{path}: only binary PPM (P6) is supported")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ImageFormatError(f"{path}: malformed PPM header") from None
    if maxval != 255:
        raise ImageFormatError(f"{path}: only 8-bit PPM is supported")
    pos += 1  # single whitespace byte after maxval
    raw = data[pos:pos + w * h * 3]
    if len(raw) != w * h * 3:
        raise ImageFormatError(f"{path}: truncated PPM pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3).copy()


def write_ppm(path: str | Path, img: np.ndarray) -> None:
    img = to_uint8(img)
    h, w = img.shape[:2]
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + img.tobytes())


def read_image(path: str | Path) -> np.ndarray:
    """Load an RGB frame as H x W x 3 uint8."""
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        return read_ppm(path)
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except UnidentifiedImageError:
        raise ImageFormatError(f"{path}: not a readable image") from None


def write_image(path: str | Path, img: np.ndarray) -> None:
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        write_ppm(path, img)
        return
    # fixed compression settings keep the output byte-identical across runs
    Image.fromarray(to_uint8(img), mode="RGB").save(path, format="PNG", compress_level=6)


def list_frames(directory: str | Path) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir()
                  if p.is_file() and p.suffix.lower() in FRAME_SUFFIXES)


def read_frames(directory: str | Path) -> list[np.ndarray]:
    return [read_image(p) for p in list_frames(directory)]


def write_frames(directory: str | Path, frames, suffix: str = ".png") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, fr in enumerate(frames):
        p = directory / f"{i:05d}{suffix}"
        write_image(p, fr)
        paths.append(p)
    return paths


def write_flo(path: str | Path, flow: np.ndarray) -> None:
    flow = np.asarray(flow, dtype="<f4")
    h, w = flow.shape[:2]
    with open(path, "wb") as fh:
        fh.write(np.array([FLO_MAGIC], "<f4").tobytes())
        fh.write(np.array([w, h], "<i4").tobytes())
        fh.write(flow.reshape(h, w, 2).tobytes())


def read_flo(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 12 or np.frombuffer(data[:4], "<f4")[0] != np.float32(FLO_MAGIC):
        raise ValueError(f"{path}: not a .flo file")
    w, h = np.frombuffer(data[4:12], "<i4")
    body = np.frombuffer(data[12:], "<f4")
    if body.size != w * h * 2:
        raise ValueError(f"{path}: truncated .flo payload")
    return body.reshape(h, w, 2).astype(np.float64)
