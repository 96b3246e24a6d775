"""Endoscopy-oriented augmentation: orientation permutations applied jointly
to frame/depth/mask, plus photometric perturbations applied to RGB only.

Geometric transforms are pure pixel permutations (quarter-turn rotation,
horizontal/vertical flips) so depth is never interpolated.  Photometric
kinds: gaussian_blur, auto_contrast, motion_blur, median_blur,
random_gamma, defocus, random_fog, random_brightness_contrast.  Everything
is driven by an explicit seed and serializes to JSON.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import ndimage

from .types import DepthMap, RgbFrame, ValidMask, VideoSequence

__all__ = [
    "PHOTOMETRIC_KINDS",
    "PARAM_RANGES",
    "PhotometricOp",
    "GeometricConfig",
    "AugmentConfig",
    "AugmentPolicy",
    "sample_config",
    "apply_geometric",
    "apply_photometric",
    "apply_window",
]

PHOTOMETRIC_KINDS = (
    "gaussian_blur",
    "auto_contrast",
    "motion_blur",
    "median_blur",
    "random_gamma",
    "defocus",
    "random_fog",
    "random_brightness_contrast",
)

FOG_GRAY = 0.8

# Documented parameter ranges; values outside these are rejected.
PARAM_RANGES: dict[str, dict[str, tuple[float, float] | tuple[int, ...]]] = {
    "gaussian_blur": {"sigma": (0.5, 2.0)},
    "auto_contrast": {},
    "motion_blur": {"length": (3, 5, 7, 9), "angle": (0.0, math.pi)},
    "median_blur": {"kernel": (3, 5)},
    "random_gamma": {"gamma": (0.7, 1.5)},
    "defocus": {"radius": (1, 2, 3)},
    "random_fog": {"alpha": (0.1, 0.4)},
    "random_brightness_contrast": {"scale": (0.8, 1.25), "shift": (-0.2, 0.2)},
}


@dataclass(frozen=True)
class PhotometricOp:
    kind: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in PHOTOMETRIC_KINDS:
            raise ValueError(f"unknown photometric kind {self.kind!r}")
        spec = PARAM_RANGES[self.kind]
        if set(self.params) != set(spec):
            raise ValueError(
                f"{self.kind}: expected params {sorted(spec)}, got {sorted(self.params)}"
            )
        for name, rng in spec.items():
            v = self.params[name]
            if len(rng) == 2 and isinstance(rng[0], float):
                lo, hi = rng
                if not lo <= v <= hi:
                    raise ValueError(f"{self.kind}.{name}={v} outside [{lo}, {hi}]")
            else:
                if v not in rng:
                    raise ValueError(f"{self.kind}.{name}={v} not in {rng}")
        object.__setattr__(self, "params", dict(self.params))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}


@dataclass(frozen=True)
class GeometricConfig:
    quarter_turns: int = 0
    hflip: bool = False
    vflip: bool = False

    def __post_init__(self) -> None:
        if self.quarter_turns not in (0, 1, 2, 3):
            raise ValueError("quarter_turns must be in {0, 1, 2, 3}")

    @property
    def is_identity(self) -> bool:
        return self.quarter_turns == 0 and not self.hflip and not self.vflip


@dataclass(frozen=True)
class AugmentConfig:
    """One sampled transform: geometry first, then photometric ops in order."""

    geometric: GeometricConfig = GeometricConfig()
    photometric: tuple[PhotometricOp, ...] = ()
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "geometric": {
                "quarter_turns": self.geometric.quarter_turns,
                "hflip": self.geometric.hflip,
                "vflip": self.geometric.vflip,
            },
            "photometric": [op.to_dict() for op in self.photometric],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "AugmentConfig":
        geo = d.get("geometric", {})
        return cls(
            geometric=GeometricConfig(
                quarter_turns=int(geo.get("quarter_turns", 0)),
                hflip=bool(geo.get("hflip", False)),
                vflip=bool(geo.get("vflip", False)),
            ),
            photometric=tuple(
                PhotometricOp(op["kind"], op.get("params", {})) for op in d.get("photometric", ())
            ),
            seed=int(d.get("seed", 0)),
        )


@dataclass(frozen=True)
class AugmentPolicy:
    """Inclusion probabilities: one per geometric component and photometric kind."""

    rotation: float = 0.5
    hflip: float = 0.5
    vflip: float = 0.5
    photometric: Mapping[str, float] = field(
        default_factory=lambda: {k: 0.3 for k in PHOTOMETRIC_KINDS}
    )

    def __post_init__(self) -> None:
        probs = [self.rotation, self.hflip, self.vflip, *self.photometric.values()]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("probabilities must lie in [0, 1]")
        unknown = set(self.photometric) - set(PHOTOMETRIC_KINDS)
        if unknown:
            raise ValueError(f"unknown photometric kinds in policy: {sorted(unknown)}")
        object.__setattr__(self, "photometric", dict(self.photometric))

    @classmethod
    def disabled(cls) -> "AugmentPolicy":
        return cls(rotation=0.0, hflip=0.0, vflip=0.0, photometric={k: 0.0 for k in PHOTOMETRIC_KINDS})

    @classmethod
    def always(cls) -> "AugmentPolicy":
        return cls(rotation=1.0, hflip=1.0, vflip=1.0, photometric={k: 1.0 for k in PHOTOMETRIC_KINDS})


def _sample_params(kind: str, rng: np.random.Generator) -> dict[str, float]:
    params: dict[str, float] = {}
    for name, spec in PARAM_RANGES[kind].items():
        if len(spec) == 2 and isinstance(spec[0], float):
            lo, hi = spec
            params[name] = float(rng.uniform(lo, hi))
        else:
            params[name] = int(rng.choice(spec))
    return params


def sample_config(rng_seed: int, policy: AugmentPolicy = AugmentPolicy()) -> AugmentConfig:
    """Sample one AugmentConfig; deterministic in (seed, policy)."""
    rng = np.random.default_rng(rng_seed)
    rotate = rng.uniform() < policy.rotation
    quarter_turns = int(rng.integers(1, 4)) if rotate else 0
    hflip = bool(rng.uniform() < policy.hflip)
    vflip = bool(rng.uniform() < policy.vflip)
    ops = []
    for kind in PHOTOMETRIC_KINDS:
        include = rng.uniform() < policy.photometric.get(kind, 0.0)
        params = _sample_params(kind, rng)  # always drawn, to keep the stream aligned
        if include:
            ops.append(PhotometricOp(kind, params))
    return AugmentConfig(
        geometric=GeometricConfig(quarter_turns=quarter_turns, hflip=hflip, vflip=vflip),
        photometric=tuple(ops),
        seed=rng_seed,
    )


def _permute(arr: np.ndarray, geo: GeometricConfig) -> np.ndarray:
    out = arr
    if geo.quarter_turns:
        out = np.rot90(out, k=geo.quarter_turns, axes=(0, 1))
    if geo.hflip:
        out = out[:, ::-1]
    if geo.vflip:
        out = out[::-1, :]
    return np.ascontiguousarray(out)


def apply_geometric(
    frame: RgbFrame,
    depth: Optional[DepthMap],
    mask: Optional[ValidMask],
    geo: GeometricConfig,
) -> tuple[RgbFrame, Optional[DepthMap], Optional[ValidMask]]:
    """Apply one pixel permutation to every present member.

    Depth values are permuted, never interpolated.  Odd quarter turns need
    square inputs.
    """
    h, w = frame.shape
    if geo.quarter_turns % 2 == 1 and h != w:
        raise ValueError(f"odd quarter turns need square frames, got {h}x{w}")
    for member, name in ((depth, "depth"), (mask, "mask")):
        if member is not None and member.shape != frame.shape:
            raise ValueError(f"{name} shape {member.shape} != frame shape {frame.shape}")
    new_frame = RgbFrame(_permute(frame.values, geo))
    new_depth = None if depth is None else DepthMap(_permute(depth.values, geo))
    new_mask = None if mask is None else ValidMask(_permute(mask.flags, geo))
    return new_frame, new_depth, new_mask


def _line_kernel(length: int, angle: float) -> np.ndarray:
    kernel = np.zeros((length, length))
    c = (length - 1) / 2
    dx, dy = math.cos(angle), math.sin(angle)
    for i in range(length):
        t = i - c
        r = int(round(c + t * dy))
        col = int(round(c + t * dx))
        kernel[r, col] = 1.0
    return kernel / kernel.sum()


def _disc_kernel(radius: int) -> np.ndarray:
    size = 2 * radius + 1
    yy, xx = np.mgrid[:size, :size] - radius
    kernel = (yy**2 + xx**2 <= radius**2).astype(np.float64)
    return kernel / kernel.sum()


def _per_channel(values: np.ndarray, fn) -> np.ndarray:
    return np.stack([fn(values[:, :, c]) for c in range(3)], axis=2)


def apply_photometric(frame: RgbFrame, op: PhotometricOp) -> RgbFrame:
    """Apply one photometric perturbation to the RGB values only."""
    x = frame.values.astype(np.float64)
    p = op.params
    if op.kind == "gaussian_blur":
        sigma = p["sigma"]
        radius = math.ceil(3 * sigma)
        out = _per_channel(
            x, lambda ch: ndimage.gaussian_filter(ch, sigma, truncate=radius / sigma, mode="reflect")
        )
    elif op.kind == "auto_contrast":
        def stretch(ch: np.ndarray) -> np.ndarray:
            lo, hi = np.percentile(ch, [1.0, 99.0])
            if hi <= lo:
                return ch
            return (ch - lo) / (hi - lo)
        out = _per_channel(x, stretch)
    elif op.kind == "motion_blur":
        kernel = _line_kernel(int(p["length"]), p["angle"])
        out = _per_channel(x, lambda ch: ndimage.convolve(ch, kernel, mode="reflect"))
    elif op.kind == "median_blur":
        k = int(p["kernel"])
        out = _per_channel(x, lambda ch: ndimage.median_filter(ch, size=k, mode="reflect"))
    elif op.kind == "random_gamma":
        out = x ** p["gamma"]
    elif op.kind == "defocus":
        kernel = _disc_kernel(int(p["radius"]))
        out = _per_channel(x, lambda ch: ndimage.convolve(ch, kernel, mode="reflect"))
    elif op.kind == "random_fog":
        out = (1.0 - p["alpha"]) * x + p["alpha"] * FOG_GRAY
    elif op.kind == "random_brightness_contrast":
        out = p["scale"] * (x - 0.5) + 0.5 + p["shift"]
    else:  # pragma: no cover - PhotometricOp validates kinds
        raise ValueError(f"unknown photometric kind {op.kind!r}")
    return RgbFrame(np.clip(out, 0.0, 1.0))


def apply_window(window: VideoSequence, cfg: AugmentConfig) -> VideoSequence:
    """Apply one config identically to every frame (and depth/mask) of a window."""
    frames: list[RgbFrame] = []
    depths: list[DepthMap] = []
    masks: list[ValidMask] = []
    for t in range(len(window)):
        frame = window.frames[t]
        depth = None if window.depths is None else window.depths[t]
        mask = None if window.masks is None else window.masks[t]
        frame, depth, mask = apply_geometric(frame, depth, mask, cfg.geometric)
        for op in cfg.photometric:
            frame = apply_photometric(frame, op)
        frames.append(frame)
        if depth is not None:
            depths.append(depth)
        if mask is not None:
            masks.append(mask)
    return VideoSequence(
        frames=tuple(frames),
        depths=tuple(depths) if depths else None,
        masks=tuple(masks) if masks else None,
        id=window.id,
        fps_hint=window.fps_hint,
    )
