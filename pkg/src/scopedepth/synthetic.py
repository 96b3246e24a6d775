"""Procedural tube scenes with analytic ground-truth depth.

A camera travels along the axis of a (optionally deformed) tube and rolls
around it.  Per-pixel depth is the distance along the camera's optical
axis to the tube wall, clamped to [0, 100] mm.  RGB comes from Lambertian
shading of the analytic surface normal under a headlight with near-field
falloff, plus mild surface banding so appearance carries geometry.  An
optional per-frame illumination gain flickers the brightness without
touching depth, giving temporal models something to smooth out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .types import DepthMap, RgbFrame, ValidMask, VideoSequence

__all__ = ["TubeConfig", "gen_tube_sequence", "tube_frame"]

DEPTH_CLAMP_MM = 100.0


@dataclass(frozen=True)
class TubeConfig:
    """Scene parameters; radii in millimeters, angles in radians."""

    radius: float = 28.0  # base tube radius, within 20-40
    lobe_amp: float = 0.10  # angular deformation amplitude (relative)
    lobes: int = 3  # angular deformation frequency
    ripple_amp: float = 0.05  # along-axis deformation amplitude (relative)
    ripple_freq: float = 0.015  # rad per mm along the axis
    fov_deg: float = 90.0
    speed: float = 2.5  # forward travel per frame, mm
    roll_rate: float = 0.05  # roll per frame, rad
    texture_amp: float = 0.18
    light_falloff: float = 45.0  # falloff half-distance, mm
    ambient: float = 0.10
    flicker_amp: float = 0.0  # per-frame illumination gain amplitude

    def __post_init__(self) -> None:
        if not 0 < self.radius:
            raise ValueError("radius must be positive")
        if not 0 < self.fov_deg < 180:
            raise ValueError("fov_deg must lie in (0, 180)")

    @classmethod
    def straight(cls, **kwargs) -> "TubeConfig":
        """Undeformed cylinder; depth is exactly radially monotone."""
        return cls(lobe_amp=0.0, ripple_amp=0.0, **kwargs)


@dataclass(frozen=True)
class _ScenePhases:
    lobe: float
    ripple: float
    texture: float
    roll0: float
    flicker_freq: float
    flicker_phase: float


def _phases(seed: int) -> _ScenePhases:
    rng = np.random.default_rng(seed)
    return _ScenePhases(
        lobe=float(rng.uniform(0, 2 * math.pi)),
        ripple=float(rng.uniform(0, 2 * math.pi)),
        texture=float(rng.uniform(0, 2 * math.pi)),
        roll0=float(rng.uniform(0, 2 * math.pi)),
        flicker_freq=float(rng.uniform(0.5, 1.5)),
        flicker_phase=float(rng.uniform(0, 2 * math.pi)),
    )


def _pixel_rays(size: int, fov_deg: float, roll: float) -> tuple[np.ndarray, ...]:
    """Unit ray directions (dxy_norm, theta, dz) for every pixel."""
    half = math.tan(math.radians(fov_deg) / 2)
    coords = (np.arange(size) + 0.5 - size / 2) / (size / 2) * half
    u, v = np.meshgrid(coords, coords)  # u: +x right, v: +y down
    norm = np.sqrt(u * u + v * v + 1.0)
    dz = 1.0 / norm
    dxy = np.sqrt(u * u + v * v) / norm
    theta = np.arctan2(v, u) + roll
    return dxy, theta, dz


def _radius_at(cfg: TubeConfig, ph: _ScenePhases, theta: np.ndarray, z: np.ndarray) -> np.ndarray:
    return cfg.radius * (
        1.0
        + cfg.lobe_amp * np.cos(cfg.lobes * theta + ph.lobe)
        + cfg.ripple_amp * np.sin(cfg.ripple_freq * z + ph.ripple)
    )


def _radius_dz(cfg: TubeConfig, ph: _ScenePhases, z: np.ndarray) -> np.ndarray:
    return cfg.radius * cfg.ripple_amp * cfg.ripple_freq * np.cos(cfg.ripple_freq * z + ph.ripple)


def _radius_dtheta(cfg: TubeConfig, ph: _ScenePhases, theta: np.ndarray) -> np.ndarray:
    return -cfg.radius * cfg.lobe_amp * cfg.lobes * np.sin(cfg.lobes * theta + ph.lobe)


def tube_frame(
    cfg: TubeConfig, seed: int, t: int, size: int
) -> tuple[RgbFrame, DepthMap, ValidMask]:
    """Render frame t of the seeded scene at the given resolution."""
    if size < 16:
        raise ValueError("size must be >= 16")
    ph = _phases(seed)
    z_cam = cfg.speed * t
    roll = ph.roll0 + cfg.roll_rate * t
    dxy, theta, dz = _pixel_rays(size, cfg.fov_deg, roll)

    # Solve ray_t * dxy = radius(theta, z_cam + ray_t * dz) by fixed point.
    # Away from the axis the iteration contracts fast; near the axis the
    # solution exceeds the clamp distance anyway.
    safe_dxy = np.maximum(dxy, 1e-9)
    ray_t = cfg.radius / safe_dxy
    for _ in range(30):
        z_hit = z_cam + ray_t * dz
        ray_t = _radius_at(cfg, ph, theta, z_hit) / safe_dxy
    z_hit = z_cam + ray_t * dz
    depth = np.minimum(ray_t * dz, DEPTH_CLAMP_MM)

    # Outward gradient of F = rho - r(theta, z) at the hit point.
    rho = ray_t * dxy
    r_theta = _radius_dtheta(cfg, ph, theta)
    r_z = _radius_dz(cfg, ph, z_hit)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    # x = rho cos(theta), y = rho sin(theta)
    gx = cos_t + r_theta * sin_t / np.maximum(rho, 1e-9)
    gy = sin_t - r_theta * cos_t / np.maximum(rho, 1e-9)
    gz = -r_z
    gnorm = np.sqrt(gx * gx + gy * gy + gz * gz)

    # Ray direction components: radial = dxy, axial = dz.
    dot = (gx * cos_t + gy * sin_t) * dxy + gz * dz  # grad . ray
    lambert = np.clip(dot / np.maximum(gnorm, 1e-12), 0.0, 1.0)
    falloff = 1.0 / (1.0 + (depth / cfg.light_falloff) ** 2)
    band = 1.0 + cfg.texture_amp * np.sin(0.35 * z_hit + 2.0 * theta + ph.texture)
    gain = 1.0 + cfg.flicker_amp * math.sin(ph.flicker_freq * t + ph.flicker_phase)
    shade = gain * (cfg.ambient + (1.0 - cfg.ambient) * lambert * falloff) * band

    base = np.array([0.82, 0.42, 0.34])
    rgb = np.clip(shade[:, :, None] * base[None, None, :], 0.0, 1.0)
    frame = RgbFrame(rgb)
    depth_map = DepthMap(depth)
    mask = ValidMask(depth > 0)
    return frame, depth_map, mask


def gen_tube_sequence(
    seed: int,
    num_frames: int,
    size: int,
    cfg: TubeConfig = TubeConfig(),
    video_id: str = "",
) -> VideoSequence:
    """Seeded tube fly-through with paired analytic depth and masks."""
    if num_frames < 1:
        raise ValueError("num_frames must be >= 1")
    frames, depths, masks = [], [], []
    for t in range(num_frames):
        frame, depth, mask = tube_frame(cfg, seed, t, size)
        frames.append(frame)
        depths.append(depth)
        masks.append(mask)
    return VideoSequence(
        frames=tuple(frames),
        depths=tuple(depths),
        masks=tuple(masks),
        id=video_id or f"tube-{seed}",
        fps_hint=None,
    )
