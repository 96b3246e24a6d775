"""Grayscale PFM (portable float map) reading and writing.

Layout: magic token ``Pf``, ASCII ``width height``, a scale token whose sign
encodes byte order (negative = little-endian), then ``width*height`` raw
32-bit floats in bottom-up row order.  Round trips are bit-exact.
"""

from __future__ import annotations

import numpy as np

from .types import DepthMap

__all__ = ["PfmError", "read_pfm", "write_pfm"]

_WHITESPACE = b" \t\n\r\f\v"


class PfmError(ValueError):
    """Malformed, truncated, or unsupported PFM content."""


def _next_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n and buf[pos : pos + 1] in _WHITESPACE:
        pos += 1
    start = pos
    while pos < n and buf[pos : pos + 1] not in _WHITESPACE:
        pos += 1
    if start == pos:
        raise PfmError("malformed header: unexpected end of data")
    return buf[start:pos], pos


def read_pfm(data: bytes) -> DepthMap:
    """Parse a grayscale PFM byte string into a DepthMap.

    Raises PfmError on color PFM ("PF"), malformed headers, or payloads
    whose length does not match the declared dimensions.
    """
    magic, pos = _next_token(data, 0)
    if magic == b"PF":
        raise PfmError("color PFM (\"PF\") is not supported; expected grayscale \"Pf\"")
    if magic != b"Pf":
        raise PfmError(f"malformed header: bad magic {magic!r}")

    try:
        wtok, pos = _next_token(data, pos)
        htok, pos = _next_token(data, pos)
        width, height = int(wtok), int(htok)
    except (PfmError, ValueError) as exc:
        raise PfmError(f"malformed header: bad dimensions ({exc})") from None
    if width < 1 or height < 1:
        raise PfmError(f"malformed header: non-positive dimensions {width}x{height}")

    try:
        stok, pos = _next_token(data, pos)
        scale = float(stok)
    except (PfmError, ValueError):
        raise PfmError("malformed header: bad scale token") from None
    if scale == 0:
        raise PfmError("malformed header: zero scale token")

    # Exactly one whitespace byte separates the scale token from the payload.
    if pos >= len(data) or data[pos : pos + 1] not in _WHITESPACE:
        raise PfmError("malformed header: missing separator before payload")
    pos += 1

    payload = data[pos:]
    expected = 4 * width * height
    if len(payload) < expected:
        raise PfmError(
            f"truncated payload: expected {expected} bytes, got {len(payload)}"
        )
    if len(payload) > expected:
        raise PfmError(
            f"payload holds {len(payload)} bytes, expected exactly {expected}"
        )

    dtype = "<f4" if scale < 0 else ">f4"
    flat = np.frombuffer(payload, dtype=dtype).astype("<f4", copy=False)
    grid = flat.reshape(height, width)
    # PFM stores the bottom image row first.
    values = np.flipud(grid)
    try:
        return DepthMap(values)
    except ValueError as exc:
        raise PfmError(f"invalid depth payload: {exc}") from None


def write_pfm(depth: DepthMap) -> bytes:
    """Serialize a DepthMap as little-endian grayscale PFM."""
    values = depth.values
    if not np.isfinite(values).all():
        raise PfmError("cannot write non-finite depth values")
    header = f"Pf\n{depth.width} {depth.height}\n{-1.0:.4f}\n".encode("ascii")
    payload = np.flipud(values.astype("<f4", copy=False)).tobytes()
    return header + payload
