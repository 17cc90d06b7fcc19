"""GIF87a/GIF89a reader and GIF89a writer.

The document model keeps each frame's indices exactly as stored in the
file. :func:`composite_frames` turns a document into full-canvas RGB frames
honouring disposal methods 0-2.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import lzw
from .errors import GifFormatError, GifTruncatedError

# acronyms: GCT/LCT = global/local color table, GCE = graphic control extension

_TRAILER = 0x3B
_IMAGE = 0x2C
_EXTENSION = 0x21
_NETSCAPE = b"NETSCAPE2.0"


@dataclass(eq=False)
class IndexedFrame:
    indices: np.ndarray
    delay: int = 0
    palette: np.ndarray | None = None
    left: int = 0
    top: int = 0
    disposal: int = 0
    transparent_index: int | None = None

    def __post_init__(self) -> None:
        self.indices = np.ascontiguousarray(self.indices, dtype=np.uint8)
        if self.indices.ndim != 2:
            raise ValueError("frame indices must be a 2-D array")
        if self.palette is not None:
            self.palette = np.asarray(self.palette, dtype=np.uint8).reshape(-1, 3)

    @property
    def height(self) -> int:
        return self.indices.shape[0]

    @property
    def width(self) -> int:
        return self.indices.shape[1]

    @property
    def palette_ref(self) -> str:
        return "global" if self.palette is None else "local"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IndexedFrame):
            return NotImplemented
        return (
            np.array_equal(self.indices, other.indices)
            and self.delay == other.delay
            and _palettes_equal(self.palette, other.palette)
            and (self.left, self.top, self.disposal, self.transparent_index)
            == (other.left, other.top, other.disposal, other.transparent_index)
        )


@dataclass(eq=False)
class GifDocument:
    width: int
    height: int
    global_palette: np.ndarray | None
    frames: list[IndexedFrame] = field(default_factory=list)
    loop_count: int | None = 0
    background_index: int = 0

    def __post_init__(self) -> None:
        if self.global_palette is not None:
            self.global_palette = np.asarray(self.global_palette, dtype=np.uint8).reshape(-1, 3)

    def palette_for(self, frame: IndexedFrame) -> np.ndarray:
        pal = frame.palette if frame.palette is not None else self.global_palette
        if pal is None:
            raise GifFormatError("frame has neither a local nor a global color table")
        return pal

    def validate(self) -> None:
        if not (1 <= self.width <= 0xFFFF and 1 <= self.height <= 0xFFFF):
            raise ValueError(f"invalid canvas size {self.width}x{self.height}")
        if self.global_palette is None:
            raise ValueError("a global palette is required for encoding")
        _check_palette_size(self.global_palette)
        if not 0 <= self.background_index < len(self.global_palette):
            raise ValueError(f"background index {self.background_index} outside the global palette")
        for i, fr in enumerate(self.frames):
            pal = self.palette_for(fr)
            _check_palette_size(pal)
            if fr.left + fr.width > self.width or fr.top + fr.height > self.height:
                raise ValueError(f"frame {i} extends beyond the canvas")
            if fr.indices.size and int(fr.indices.max()) >= len(pal):
                raise ValueError(f"frame {i} references index {int(fr.indices.max())} "
                                 f"but its palette has {len(pal)} colors")
            if not 0 <= fr.delay <= 0xFFFF:
                raise ValueError(f"frame {i} delay out of range")
            if fr.transparent_index is not None and not 0 <= fr.transparent_index < len(pal):
                raise ValueError(f"frame {i} transparent index outside its palette")
            if fr.disposal not in (0, 1, 2, 3):
                raise ValueError(f"frame {i} has invalid disposal method {fr.disposal}")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GifDocument):
            return NotImplemented
        return (
            (self.width, self.height, self.loop_count, self.background_index)
            == (other.width, other.height, other.loop_count, other.background_index)
            and _palettes_equal(self.global_palette, other.global_palette)
            and len(self.frames) == len(other.frames)
            and all(a == b for a, b in zip(self.frames, other.frames))
        )


def _palettes_equal(a: np.ndarray | None, b: np.ndarray | None) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(a, b)


def _check_palette_size(pal: np.ndarray) -> None:
    if not 1 <= len(pal) <= 256:
        raise ValueError(f"palette size must be in [1, 256], got {len(pal)}")


def min_code_size(palette_size: int) -> int:
    """LZW minimum code size for a palette: max(2, ceil(log2(N)))."""
    return max(2, math.ceil(math.log2(palette_size))) if palette_size > 1 else 2


def _table_bits(palette_size: int) -> int:
    # stored color table holds 2 ** (bits + 1) entries
    return max(1, math.ceil(math.log2(palette_size))) - 1 if palette_size > 1 else 0


def _color_table_bytes(pal: np.ndarray) -> bytes:
    size = 2 ** (_table_bits(len(pal)) + 1)
    # pad with copies of the last color so the decoder can strip the padding again
    padded = np.concatenate([pal, np.repeat(pal[-1:], size - len(pal), axis=0)])
    return padded.astype(np.uint8).tobytes()


def _sub_blocks(data: bytes) -> bytes:
    out = bytearray()
    for i in range(0, len(data), 255):
        chunk = data[i:i + 255]
        out.append(len(chunk))
        out += chunk
    out.append(0)
    return bytes(out)


def encode_gif(doc: GifDocument) -> bytes:
    """Serialize a document as GIF89a. Frames are written non-interlaced."""
    doc.validate()
    gct = doc.global_palette
    out = bytearray(b"GIF89a")
    packed = 0x80 | (7 << 4) | _table_bits(len(gct))
    out += struct.pack("<HHBBB", doc.width, doc.height, packed, doc.background_index, 0)
    out += _color_table_bytes(gct)

    if doc.loop_count is not None:
        out += bytes([_EXTENSION, 0xFF, len(_NETSCAPE)]) + _NETSCAPE
        out += bytes([3, 1]) + struct.pack("<H", doc.loop_count) + b"\x00"

    for fr in doc.frames:
        flags = (fr.disposal & 7) << 2
        tindex = 0
        if fr.transparent_index is not None:
            flags |= 1
            tindex = fr.transparent_index
        out += bytes([_EXTENSION, 0xF9, 4, flags]) + struct.pack("<HB", fr.delay, tindex) + b"\x00"

        packed = 0
        if fr.palette is not None:
            packed = 0x80 | _table_bits(len(fr.palette))
        out += bytes([_IMAGE]) + struct.pack("<HHHHB", fr.left, fr.top, fr.width, fr.height, packed)
        if fr.palette is not None:
            out += _color_table_bytes(fr.palette)

        code_size = min_code_size(len(doc.palette_for(fr)))
        out.append(code_size)
        out += _sub_blocks(lzw.compress(fr.indices.tobytes(), code_size))

    out.append(_TRAILER)
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def at_end(self) -> bool:
        return self.pos >= len(self.data)

    def read(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise GifTruncatedError(f"unexpected end of stream at byte {len(self.data)} "
                                    f"(needed {n} bytes at {self.pos})")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def byte(self) -> int:
        return self.read(1)[0]

    def sub_blocks(self) -> bytes:
        out = bytearray()
        size = self.byte()
        while size:
            out += self.read(size)
            size = self.byte()
        return bytes(out)


def _deinterlace(rows: np.ndarray) -> np.ndarray:
    h = rows.shape[0]
    order = [y for start, step in ((0, 8), (4, 8), (2, 4), (1, 2)) for y in range(start, h, step)]
    out = np.empty_like(rows)
    out[order] = rows
    return out


def _trim_padding(table: np.ndarray, keep: int) -> np.ndarray:
    # trailing entries repeating an earlier color are color-table padding
    n = len(table)
    while n > max(keep, 1):
        last = table[n - 1]
        if not np.any(np.all(table[:n - 1] == last, axis=1)):
            break
        n -= 1
    return table[:n].copy()


def decode_gif(data: bytes) -> GifDocument:
    """Parse a GIF87a/GIF89a byte string.

    Raises GifFormatError for malformed structure, GifTruncatedError when the
    stream ends early and LzwError for invalid image data codes.
    """
    data = bytes(data)
    sig = data[:6]
    if len(sig) < 6:
        if b"GIF89a".startswith(sig) or b"GIF87a".startswith(sig):
            raise GifTruncatedError("stream ends inside the signature")
        raise GifFormatError("missing GIF signature")
    if sig not in (b"GIF87a", b"GIF89a"):
        raise GifFormatError(f"bad signature {sig!r}")

    rd = _Reader(data)
    rd.pos = 6
    width, height, packed, bg_index, _aspect = struct.unpack("<HHBBB", rd.read(7))
    gct = None
    if packed & 0x80:
        gct = np.frombuffer(rd.read(3 * 2 ** ((packed & 7) + 1)), dtype=np.uint8).reshape(-1, 3)

    frames: list[IndexedFrame] = []
    local_tables: list[np.ndarray | None] = []
    loop_count: int | None = None
    gce: tuple[int, int, int | None] | None = None

    while True:
        if rd.at_end():
            if frames:
                break  # tolerate a missing trailer
            raise GifTruncatedError("stream ends before any image")
        block = rd.byte()
        if block == _TRAILER:
            break
        if block == _EXTENSION:
            label = rd.byte()
            if label == 0xF9:
                body = rd.sub_blocks()
                if len(body) < 4:
                    raise GifFormatError("short graphic control extension")
                flags, delay, tindex = body[0], body[1] | (body[2] << 8), body[3]
                gce = ((flags >> 2) & 7, delay, tindex if flags & 1 else None)
            elif label == 0xFF:
                ident = rd.read(rd.byte())
                body = rd.sub_blocks()
                if ident == _NETSCAPE and len(body) >= 3 and body[0] == 1:
                    loop_count = body[1] | (body[2] << 8)
            else:
                rd.sub_blocks()
            continue
        if block != _IMAGE:
            raise GifFormatError(f"unknown block introducer 0x{block:02x} at byte {rd.pos - 1}")

        left, top, w, h, ipacked = struct.unpack("<HHHHB", rd.read(9))
        lct = None
        if ipacked & 0x80:
            lct = np.frombuffer(rd.read(3 * 2 ** ((ipacked & 7) + 1)), dtype=np.uint8).reshape(-1, 3)
        table = lct if lct is not None else gct
        if table is None:
            raise GifFormatError("image has no color table")
        code_size = rd.byte()
        if not 2 <= code_size <= 8:
            raise GifFormatError(f"invalid LZW minimum code size {code_size}")
        pixels = lzw.decompress(rd.sub_blocks(), code_size, max_output=w * h)
        if len(pixels) < w * h:
            raise GifTruncatedError(f"image data holds {len(pixels)} of {w * h} pixels")
        indices = np.frombuffer(pixels[:w * h], dtype=np.uint8).reshape(h, w)
        if ipacked & 0x40:
            indices = _deinterlace(indices)
        if indices.size and int(indices.max()) >= len(table):
            raise GifFormatError("pixel index exceeds the color table")
        disposal, delay, tindex = gce if gce is not None else (0, 0, None)
        gce = None
        frames.append(IndexedFrame(indices.copy(), delay=delay, left=left, top=top,
                                   disposal=disposal, transparent_index=tindex))
        local_tables.append(lct)

    def needed(fr: IndexedFrame) -> int:
        # entries a frame references; anything beyond may be table padding
        n = int(fr.indices.max()) + 1 if fr.indices.size else 1
        if fr.transparent_index is not None:
            n = max(n, fr.transparent_index + 1)
        return n

    if gct is not None:
        used = [needed(f) for f, t in zip(frames, local_tables) if t is None]
        gct = _trim_padding(gct, max(used + [bg_index + 1]))
    for fr, lct in zip(frames, local_tables):
        if lct is not None:
            fr.palette = _trim_padding(lct, needed(fr))

    return GifDocument(width, height, gct, frames, loop_count=loop_count, background_index=bg_index)


def composite_frames(doc: GifDocument) -> list[np.ndarray]:
    """Render every frame onto the canvas; returns H x W x 3 uint8 arrays.

    Disposal 2 restores the frame rectangle to the background color; 3 is
    treated like 1. Transparent pixels leave the canvas untouched.
    """
    bg = np.zeros(3, np.uint8)
    if doc.global_palette is not None and doc.background_index < len(doc.global_palette):
        bg = doc.global_palette[doc.background_index]
    canvas = np.empty((doc.height, doc.width, 3), np.uint8)
    canvas[:] = bg
    out = []
    for fr in doc.frames:
        pal = doc.palette_for(fr)
        region = canvas[fr.top:fr.top + fr.height, fr.left:fr.left + fr.width]
        rgb = pal[fr.indices]
        if fr.transparent_index is None:
            region[:] = rgb
        else:
            mask = fr.indices != fr.transparent_index
            region[mask] = rgb[mask]
        out.append(canvas.copy())
        if fr.disposal == 2:
            region[:] = bg
    return out
