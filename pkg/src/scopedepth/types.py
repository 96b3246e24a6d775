"""Core domain types: depth maps, masks, RGB frames, and video sequences.

All types are immutable value objects around read-only numpy arrays, so
instances can be shared freely across threads.  Depth is metric, in
millimeters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = ["DepthMap", "ValidMask", "RgbFrame", "VideoSequence"]


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr and arr.flags.writeable:
        out = arr.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class DepthMap:
    """A height x width grid of metric depth values in millimeters.

    Values must be finite and non-negative.  Files following the phantom
    colonoscopy convention hold values in [0, 100] mm, but the type itself
    does not impose an upper bound.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values)
        if vals.ndim != 2:
            raise ValueError(f"depth map must be 2-D, got shape {vals.shape}")
        if vals.dtype not in (np.float32, np.float64):
            vals = vals.astype(np.float64)
        if not np.isfinite(vals).all():
            raise ValueError("depth map contains non-finite values")
        if (vals < 0).any():
            raise ValueError("depth map contains negative values")
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]


@dataclass(frozen=True)
class ValidMask:
    """Boolean validity flags paired with a depth map of the same shape."""

    flags: np.ndarray

    def __post_init__(self) -> None:
        flags = np.asarray(self.flags)
        if flags.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {flags.shape}")
        if flags.dtype != np.bool_:
            flags = flags.astype(np.bool_)
        object.__setattr__(self, "flags", _freeze(flags))

    @classmethod
    def from_depth(cls, depth: DepthMap) -> "ValidMask":
        """Mark exactly the pixels with strictly positive ground-truth depth."""
        return cls(depth.values > 0)

    @classmethod
    def full(cls, height: int, width: int) -> "ValidMask":
        return cls(np.ones((height, width), dtype=bool))

    @property
    def height(self) -> int:
        return self.flags.shape[0]

    @property
    def width(self) -> int:
        return self.flags.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.flags.shape  # type: ignore[return-value]

    @property
    def count(self) -> int:
        return int(self.flags.sum())


@dataclass(frozen=True)
class RgbFrame:
    """An RGB frame with channel values in [0, 1], shape (H, W, 3)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values)
        if vals.ndim != 3 or vals.shape[2] != 3:
            raise ValueError(f"frame must have shape (H, W, 3), got {vals.shape}")
        if vals.dtype not in (np.float32, np.float64):
            vals = vals.astype(np.float64)
        if not np.isfinite(vals).all():
            raise ValueError("frame contains non-finite values")
        if (vals < 0).any() or (vals > 1).any():
            raise ValueError("frame values must lie in [0, 1]")
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[:2]  # type: ignore[return-value]


@dataclass(frozen=True)
class VideoSequence:
    """An ordered list of frames with optional paired depths and masks.

    All member lists share one length T >= 1 and one spatial shape.
    """

    frames: tuple[RgbFrame, ...]
    depths: Optional[tuple[DepthMap, ...]] = None
    masks: Optional[tuple[ValidMask, ...]] = None
    id: str = ""
    fps_hint: Optional[float] = None

    def __post_init__(self) -> None:
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("video sequence must contain at least one frame")
        object.__setattr__(self, "frames", frames)
        shape = frames[0].shape
        if any(f.shape != shape for f in frames):
            raise ValueError("all frames must share one spatial shape")
        for name in ("depths", "masks"):
            members = getattr(self, name)
            if members is None:
                continue
            members = tuple(members)
            object.__setattr__(self, name, members)
            if len(members) != len(frames):
                raise ValueError(f"{name} length {len(members)} != frame count {len(frames)}")
            if any(m.shape != shape for m in members):
                raise ValueError(f"{name} spatial shape does not match frames")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames[0].shape

    def window(self, start: int, length: int) -> "VideoSequence":
        """A contiguous sub-sequence [start, start+length)."""
        sl = slice(start, start + length)
        return VideoSequence(
            frames=self.frames[sl],
            depths=None if self.depths is None else self.depths[sl],
            masks=None if self.masks is None else self.masks[sl],
            id=self.id,
            fps_hint=self.fps_hint,
        )
