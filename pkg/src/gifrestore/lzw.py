"""Variable-width LZW as used inside GIF image data blocks.

Codes are packed least-significant-bit first. The dictionary is capped at
4096 entries; the encoder emits a clear code when it fills up.
"""

from __future__ import annotations

from .errors import LzwError

MAX_CODE = 4096
MAX_CODE_BITS = 12


class _BitWriter:
    def __init__(self) -> None:
        self.out = bytearray()
        self.acc = 0
        self.nbits = 0

    def write(self, code: int, width: int) -> None:
        self.acc |= code << self.nbits
        self.nbits += width
        while self.nbits >= 8:
            self.out.append(self.acc & 0xFF)
            self.acc >>= 8
            self.nbits -= 8

    def flush(self) -> bytes:
        if self.nbits:
            self.out.append(self.acc & 0xFF)
            self.acc = 0
            self.nbits = 0
        return bytes(self.out)


def compress(data: bytes, min_code_size: int) -> bytes:
    """LZW-compress a string of palette indices.

    Every symbol in ``data`` must be below ``2 ** min_code_size``.
    """
    if not 2 <= min_code_size <= 8:
        raise ValueError(f"minimum code size must be in [2, 8], got {min_code_size}")
    clear = 1 << min_code_size
    eoi = clear + 1
    data = bytes(data)
    if data and max(data) >= clear:
        raise ValueError(f"symbol {max(data)} does not fit in {min_code_size} bits")

    writer = _BitWriter()
    code_size = min_code_size + 1
    next_code = eoi + 1
    # (prefix code, next symbol) -> code
    table: dict[int, int] = {}
    writer.write(clear, code_size)

    if not data:
        writer.write(eoi, code_size)
        return writer.flush()

    prefix = data[0]
    for sym in data[1:]:
        key = (prefix << 8) | sym
        code = table.get(key)
        if code is not None:
            prefix = code
            continue
        writer.write(prefix, code_size)
        if next_code < MAX_CODE:
            table[key] = next_code
            next_code += 1
            if next_code > (1 << code_size) and code_size < MAX_CODE_BITS:
                code_size += 1
        else:
            writer.write(clear, code_size)
            table.clear()
            code_size = min_code_size + 1
            next_code = eoi + 1
        prefix = sym

    writer.write(prefix, code_size)
    # the decoder adds one entry after reading the final code; mirror its width change
    if next_code < MAX_CODE:
        next_code += 1
        if next_code > (1 << code_size) and code_size < MAX_CODE_BITS:
            code_size += 1
    writer.write(eoi, code_size)
    return writer.flush()


def decompress(stream: bytes, min_code_size: int, max_output: int | None = None) -> bytes:
    """Inverse of :func:`compress`.

    Decoding stops at the end-of-information code, at the end of ``stream``,
    or once ``max_output`` symbols have been produced.
    """
    if not 2 <= min_code_size <= 8:
        raise LzwError(f"invalid LZW minimum code size {min_code_size}")
    clear = 1 << min_code_size
    eoi = clear + 1

    table: list[bytes] = [bytes([i]) for i in range(clear)] + [b"", b""]
    out = bytearray()
    code_size = min_code_size + 1
    prev: bytes | None = None

    acc = 0
    nbits = 0
    pos = 0
    n = len(stream)

    while True:
        while nbits < code_size and pos < n:
            acc |= stream[pos] << nbits
            pos += 1
            nbits += 8
        if nbits < code_size:
            break
        code = acc & ((1 << code_size) - 1)
        acc >>= code_size
        nbits -= code_size

        if code == clear:
            del table[eoi + 1:]
            code_size = min_code_size + 1
            prev = None
            continue
        if code == eoi:
            break

        next_code = len(table)
        if prev is None:
            if code >= clear:
                raise LzwError(f"first code after clear must be a literal, got {code}")
            entry = table[code]
        else:
            if code < next_code:
                entry = table[code]
            elif code == next_code and next_code < MAX_CODE:
                entry = prev + prev[:1]
            else:
                raise LzwError(f"code {code} exceeds dictionary size {next_code}")
            if next_code < MAX_CODE:
                table.append(prev + entry[:1])
                if len(table) == (1 << code_size) and code_size < MAX_CODE_BITS:
                    code_size += 1
        out += entry
        prev = entry

        if max_output is not None and len(out) >= max_output:
            break

    return bytes(out if max_output is None else out[:max_output])
