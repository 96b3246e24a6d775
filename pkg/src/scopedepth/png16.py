"""16-bit single-channel PNG depth maps.

The on-disk convention maps raw integer units linearly to millimeters:
``depth_mm = raw * scale_mm_per_unit``.  The default scale 100/65535 puts
the full uint16 range onto 0-100 mm.  The scale is a toolkit convention,
not a property of the file, so it is an explicit parameter everywhere.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

from .types import DepthMap

__all__ = ["DEFAULT_DEPTH_SCALE", "read_depth_png16", "write_depth_png16"]

DEFAULT_DEPTH_SCALE = 100.0 / 65535.0

_16BIT_MODES = {"I;16", "I;16B", "I;16L", "I;16N"}
_NOT_16BIT_MODES = {"L", "P", "1", "I", "F"}


def read_depth_png16(data: bytes, scale_mm_per_unit: float = DEFAULT_DEPTH_SCALE) -> DepthMap:
    """Decode a 16-bit single-channel PNG into a metric DepthMap."""
    if scale_mm_per_unit <= 0 or not np.isfinite(scale_mm_per_unit):
        raise ValueError(f"depth scale must be positive and finite, got {scale_mm_per_unit}")
    img = Image.open(io.BytesIO(data))
    if img.mode in _NOT_16BIT_MODES:
        raise ValueError(f"not a 16-bit image (mode {img.mode})")
    if img.mode not in _16BIT_MODES:
        raise ValueError(f"not a single-channel image (mode {img.mode})")
    raw = np.asarray(img, dtype=np.uint16)
    return DepthMap(raw.astype(np.float64) * scale_mm_per_unit)


def write_depth_png16(depth: DepthMap, scale_mm_per_unit: float = DEFAULT_DEPTH_SCALE) -> bytes:
    """Encode a DepthMap as a 16-bit grayscale PNG, rounding to raw units.

    Values outside [0, 65535 * scale] saturate.
    """
    raw = np.rint(depth.values / scale_mm_per_unit)
    raw = np.clip(raw, 0, 65535).astype(np.uint16)
    img = Image.fromarray(raw, mode="I;16")
    out = io.BytesIO()
    img.save(out, format="PNG")
    return out.getvalue()
