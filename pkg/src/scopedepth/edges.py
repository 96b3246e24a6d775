"""Depth-edge maps: ratio-threshold boundaries with border erosion.

A pixel is marked when any of its 4-connected neighbor pairs has a depth
ratio strictly above ``t``; the binary set is then eroded with a square
kernel to drop spurious responses at the field-of-view border.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .types import DepthMap

__all__ = ["edge_map", "overlay_edges"]


def edge_map(depth: DepthMap | np.ndarray, threshold: float = 1.01, erosion_px: int = 3) -> np.ndarray:
    """Boolean edge mask from depth ratios of 4-connected pairs."""
    if threshold <= 1.0:
        raise ValueError(f"threshold must exceed 1, got {threshold}")
    if erosion_px < 0:
        raise ValueError("erosion_px must be >= 0")
    values = depth.values if isinstance(depth, DepthMap) else np.asarray(depth, dtype=np.float64)
    if (values <= 0).any():
        raise ValueError("edge maps need strictly positive depth")
    edges = np.zeros(values.shape, dtype=bool)
    h_ratio = np.maximum(values[:, :-1] / values[:, 1:], values[:, 1:] / values[:, :-1])
    v_ratio = np.maximum(values[:-1, :] / values[1:, :], values[1:, :] / values[:-1, :])
    h_hit = h_ratio > threshold
    v_hit = v_ratio > threshold
    edges[:, :-1] |= h_hit
    edges[:, 1:] |= h_hit
    edges[:-1, :] |= v_hit
    edges[1:, :] |= v_hit
    if erosion_px:
        kernel = np.ones((2 * erosion_px + 1, 2 * erosion_px + 1), dtype=bool)
        edges = ndimage.binary_erosion(edges, structure=kernel)
    return edges


def overlay_edges(background: np.ndarray, edges: np.ndarray, color=(0.0, 1.0, 0.0)) -> np.ndarray:
    """Paint the edge set onto an (H, W, 3) float image in [0, 1]."""
    out = np.array(background, dtype=np.float64, copy=True)
    out[edges] = color
    return np.clip(out, 0.0, 1.0)
