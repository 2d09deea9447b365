"""The RCDE embedding container: byte-level reader and writer.

Layout: magic ``RCDE`` + version byte 0x01, u32 little-endian row count
n, u32 little-endian dimension d, n*d float32 little-endian values in
row-major order, then a u32 little-endian trailer length and that many
bytes of UTF-8 JSON: ``{"labels": {attr: [per-row values]} | null,
"source": str, "dim": d}``. The trailer dim must repeat the header d.

Writing is deterministic: the JSON trailer uses sorted keys and no
whitespace, so equal inputs give equal bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from repdiff.errors import (
    BadMagicError,
    TrailerMismatchError,
    TruncatedFileError,
    ValidationError,
    VersionMismatchError,
)

MAGIC = b"RCDE"
VERSION = 1
_HEADER = struct.Struct("<4sBII")


def encode(values: np.ndarray, labels: dict | None, source: str) -> bytes:
    arr = np.asarray(values, dtype="<f4")
    if arr.ndim != 2:
        raise ValidationError(f"values must be (n, d), got shape {arr.shape}")
    n, d = arr.shape
    if d < 1:
        raise ValidationError("dimension must be >= 1")
    if labels is not None:
        labels = {str(k): [float(v) for v in vals] for k, vals in labels.items()}
        for attr, vals in labels.items():
            if len(vals) != n:
                raise ValidationError(
                    f"label {attr!r} has {len(vals)} values for {n} rows"
                )
    trailer = json.dumps(
        {"labels": labels, "source": source, "dim": d},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    return (
        _HEADER.pack(MAGIC, VERSION, n, d)
        + arr.tobytes(order="C")
        + struct.pack("<I", len(trailer))
        + trailer
    )


def decode(data: bytes) -> tuple[np.ndarray, dict | None, str]:
    """Returns (values (n, d) float32, labels or None, source)."""
    if len(data) < _HEADER.size:
        if data[: len(MAGIC)] != MAGIC[: len(data)]:
            raise BadMagicError("not an RCDE file (bad magic)")
        raise TruncatedFileError(f"header needs {_HEADER.size} bytes, got {len(data)}")
    magic, version, n, d = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagicError(f"not an RCDE file (magic {magic!r})")
    if version != VERSION:
        raise VersionMismatchError(f"unsupported RCDE version {version}")
    if d < 1:
        raise TrailerMismatchError(f"header dimension must be >= 1, got {d}")
    body = _HEADER.size + 4 * n * d
    if len(data) < body + 4:
        raise TruncatedFileError(
            f"payload needs {body + 4 - _HEADER.size} bytes after header"
        )
    values = (
        np.frombuffer(data, dtype="<f4", count=n * d, offset=_HEADER.size)
        .reshape(n, d)
        .copy()
    )
    (trailer_len,) = struct.unpack_from("<I", data, body)
    trailer_bytes = data[body + 4 : body + 4 + trailer_len]
    if len(trailer_bytes) != trailer_len:
        raise TruncatedFileError(
            f"trailer declares {trailer_len} bytes, {len(trailer_bytes)} present"
        )
    try:
        trailer = json.loads(trailer_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TrailerMismatchError(f"trailer is not valid JSON: {exc}") from None
    if not isinstance(trailer, dict):
        raise TrailerMismatchError("trailer must be a JSON object")
    if trailer.get("dim") != d:
        raise TrailerMismatchError(
            f"trailer dim {trailer.get('dim')!r} != header dimension {d}"
        )
    labels = trailer.get("labels")
    if labels is not None:
        if not isinstance(labels, dict):
            raise TrailerMismatchError("labels must be an object or null")
        for attr, vals in labels.items():
            if not isinstance(vals, list) or len(vals) != n:
                raise TrailerMismatchError(
                    f"label {attr!r} must list one value per row ({n})"
                )
        labels = {str(k): np.asarray(v, dtype=np.float64) for k, v in labels.items()}
    source = trailer.get("source", "")
    if not isinstance(source, str):
        raise TrailerMismatchError("source must be a string")
    return values, labels, source
