"""Ground-truth resolution pyramids for multi-scale supervision.

Level 1 is the source map; each coarser level halves both spatial
dimensions (rounding up) by averaging the valid pixels of a 2x2 footprint.
A coarse pixel stays valid only when at least 2 of its contributors are
valid; footprints truncated at the right/bottom border need only 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import DepthMap, ValidMask

__all__ = ["NUM_LEVELS", "GtPyramid", "build_gt_pyramid", "level_shape"]

NUM_LEVELS = 4


def level_shape(height: int, width: int, level: int) -> tuple[int, int]:
    """Spatial shape of pyramid level ``level`` (1-based) for a given source."""
    f = 2 ** (level - 1)
    return (-(-height // f), -(-width // f))


@dataclass(frozen=True)
class GtPyramid:
    """Four (DepthMap, ValidMask) pairs, finest (level 1) to coarsest (level 4)."""

    levels: tuple[tuple[DepthMap, ValidMask], ...]

    def __post_init__(self) -> None:
        if len(self.levels) != NUM_LEVELS:
            raise ValueError(f"pyramid must hold {NUM_LEVELS} levels, got {len(self.levels)}")
        h, w = self.levels[0][0].shape
        for l, (depth, mask) in enumerate(self.levels, start=1):
            if depth.shape != mask.shape:
                raise ValueError(f"level {l}: depth/mask shape mismatch")
            if depth.shape != level_shape(h, w, l):
                raise ValueError(
                    f"level {l}: shape {depth.shape} != expected {level_shape(h, w, l)}"
                )

    def depth(self, level: int) -> DepthMap:
        return self.levels[level - 1][0]

    def mask(self, level: int) -> ValidMask:
        return self.levels[level - 1][1]


def _halve(values: np.ndarray, flags: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h, w = values.shape
    oh, ow = -(-h // 2), -(-w // 2)
    ph, pw = 2 * oh, 2 * ow
    padded_vals = np.zeros((ph, pw), dtype=np.float64)
    padded_vals[:h, :w] = values
    padded_flags = np.zeros((ph, pw), dtype=bool)
    padded_flags[:h, :w] = flags
    # Footprint size before padding: 4 in the interior, 2 or 1 at truncated borders.
    footprint = np.zeros((ph, pw), dtype=np.int64)
    footprint[:h, :w] = 1

    blocks_v = padded_vals.reshape(oh, 2, ow, 2)
    blocks_f = padded_flags.reshape(oh, 2, ow, 2)
    blocks_n = footprint.reshape(oh, 2, ow, 2)

    valid_count = blocks_f.sum(axis=(1, 3))
    fp_count = blocks_n.sum(axis=(1, 3))
    vsum = (blocks_v * blocks_f).sum(axis=(1, 3))

    threshold = np.where(fp_count < 4, 1, 2)
    out_flags = valid_count >= threshold
    with np.errstate(invalid="ignore", divide="ignore"):
        out_vals = np.where(valid_count > 0, vsum / np.maximum(valid_count, 1), 0.0)
    out_vals = np.where(out_flags, out_vals, 0.0)
    return out_vals, out_flags


def build_gt_pyramid(depth: DepthMap, mask: ValidMask) -> GtPyramid:
    """Build the 4-level supervision pyramid by valid-pixel area averaging."""
    if depth.shape != mask.shape:
        raise ValueError(f"depth shape {depth.shape} != mask shape {mask.shape}")
    levels: list[tuple[DepthMap, ValidMask]] = [(depth, mask)]
    vals = depth.values.astype(np.float64)
    flags = mask.flags
    for _ in range(NUM_LEVELS - 1):
        vals, flags = _halve(vals, flags)
        levels.append((DepthMap(vals), ValidMask(flags)))
    return GtPyramid(tuple(levels))
