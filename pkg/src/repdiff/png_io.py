"""Minimal deterministic PNG codec.

The writer always emits the same bytes for the same pixels: 8-bit RGB,
filter 0 on every row, and a hand-assembled zlib stream of stored
(uncompressed) deflate blocks. That canonical form is simple enough to
mirror byte-for-byte in other languages, which is what makes grid
exports comparable across tools. The reader is more liberal: it accepts
any 8-bit gray/RGB/RGBA PNG with the standard row filters, so externally
produced images can be ingested.
"""

from __future__ import annotations

import contextlib
import os
import struct
import tempfile
import zlib

import numpy as np

from repdiff.errors import BadMagicError, DataFormatError, TruncatedFileError

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_STORED_BLOCK_MAX = 65535


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def _stored_zlib(raw: bytes) -> bytes:
    """zlib container holding only stored deflate blocks; no compressor
    involved, so the byte layout is fixed by this function alone."""
    out = [b"\x78\x01"]
    n = len(raw)
    pos = 0
    while True:
        size = min(_STORED_BLOCK_MAX, n - pos)
        final = 1 if pos + size == n else 0
        out.append(struct.pack("<BHH", final, size, size ^ 0xFFFF))
        out.append(raw[pos : pos + size])
        pos += size
        if final:
            break
    out.append(struct.pack(">I", zlib.adler32(raw) & 0xFFFFFFFF))
    return b"".join(out)


def quantize(img01: np.ndarray) -> np.ndarray:
    """[0, 1] floats to uint8 by half-up rounding (floor(x*255 + 0.5))."""
    arr = np.asarray(img01, dtype=np.float64)
    return np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def encode_png(img01: np.ndarray) -> bytes:
    """(C, H, W) image in [0, 1], C 1 or 3, to canonical RGB PNG bytes."""
    arr = np.asarray(img01)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3) or min(arr.shape[1:]) < 1:
        raise DataFormatError(f"expected (1|3, H, W) image, got shape {arr.shape}")
    if arr.shape[0] == 1:
        arr = np.repeat(arr, 3, axis=0)
    pixels = np.moveaxis(quantize(arr), 0, -1)  # (H, W, 3)
    h, w = pixels.shape[:2]
    rows = np.concatenate(
        [np.zeros((h, 1), dtype=np.uint8), pixels.reshape(h, w * 3)], axis=1
    )
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return (
        PNG_SIGNATURE
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", _stored_zlib(rows.tobytes()))
        + _chunk(b"IEND", b"")
    )


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter(raw: np.ndarray, h: int, stride: int, bpp: int) -> np.ndarray:
    rows = raw.reshape(h, stride + 1)
    out = np.zeros((h, stride), dtype=np.uint8)
    for y in range(h):
        ftype = int(rows[y, 0])
        line = rows[y, 1:].astype(np.int32)
        prev = out[y - 1].astype(np.int32) if y > 0 else np.zeros(stride, np.int32)
        if ftype == 0:
            out[y] = line.astype(np.uint8)
        elif ftype == 2:
            out[y] = ((line + prev) & 0xFF).astype(np.uint8)
        elif ftype in (1, 3, 4):
            cur = np.zeros(stride, np.int32)
            for i in range(stride):
                a = cur[i - bpp] if i >= bpp else 0
                b = prev[i]
                c = prev[i - bpp] if i >= bpp else 0
                if ftype == 1:
                    pred = a
                elif ftype == 3:
                    pred = (a + b) // 2
                else:
                    pred = _paeth(int(a), int(b), int(c))
                cur[i] = (line[i] + pred) & 0xFF
            out[y] = cur.astype(np.uint8)
        else:
            raise DataFormatError(f"unsupported PNG row filter {ftype}")
    return out


def decode_png(data: bytes) -> np.ndarray:
    """PNG bytes to a (C, H, W) float32 image in [0, 1].

    Accepts 8-bit grayscale (C=1), RGB (C=3), and RGBA (alpha dropped);
    non-critical chunks are skipped.
    """
    if data[:8] != PNG_SIGNATURE:
        raise BadMagicError("not a PNG file (bad signature)")
    pos = 8
    ihdr = None
    idat = []
    while pos < len(data):
        if pos + 8 > len(data):
            raise TruncatedFileError("truncated PNG chunk header")
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        tag = data[pos + 4 : pos + 8]
        payload = data[pos + 8 : pos + 8 + length]
        if len(payload) != length or pos + 12 + length > len(data):
            raise TruncatedFileError(f"truncated PNG chunk {tag!r}")
        pos += 12 + length
        if tag == b"IHDR":
            ihdr = struct.unpack(">IIBBBBB", payload)
        elif tag == b"IDAT":
            idat.append(payload)
        elif tag == b"IEND":
            break
    if ihdr is None or not idat:
        raise TruncatedFileError("PNG missing IHDR or IDAT")
    w, h, depth, color, _comp, _filt, interlace = ihdr
    if depth != 8 or interlace != 0:
        raise DataFormatError(f"only 8-bit non-interlaced PNG supported (depth {depth})")
    channels = {0: 1, 2: 3, 6: 4}.get(color)
    if channels is None:
        raise DataFormatError(f"unsupported PNG color type {color}")
    try:
        raw = zlib.decompress(b"".join(idat))
    except zlib.error as exc:
        raise TruncatedFileError(f"bad PNG pixel stream: {exc}") from None
    stride = w * channels
    if len(raw) != h * (stride + 1):
        raise TruncatedFileError("PNG pixel stream has wrong length")
    pixels = _unfilter(np.frombuffer(raw, dtype=np.uint8), h, stride, channels)
    img = pixels.reshape(h, w, channels)
    if channels == 4:
        img = img[:, :, :3]
    out = np.moveaxis(img, -1, 0).astype(np.float32) / 255.0
    return out


def read_png(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_png(fh.read())


def write_png(path, img01: np.ndarray) -> None:
    # Temp file plus rename so readers never observe a half-written image.
    data = encode_png(img01)
    target = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(target) or ".", suffix=".png.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o644)
        os.replace(tmp, target)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise
