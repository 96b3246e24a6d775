"""Training objectives over predicted depth, as value-and-gradient functions.

Every loss takes (pred, gt, mask) arrays or domain types, reduces over
valid pixels, and returns the scalar value plus the analytic gradient with
respect to every predicted pixel (zeros at invalid pixels).  Gradients use
sign(0) = 0 at the kinks of absolute values and are verified against
central finite differences in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Optional, Sequence

import numpy as np

from .pyramid import NUM_LEVELS, GtPyramid
from .types import DepthMap, ValidMask

__all__ = [
    "SilogConfig",
    "MultiScaleConfig",
    "VideoNormalization",
    "AblationToggles",
    "ABLATION_ROWS",
    "LossBreakdown",
    "TEMPORAL_WEIGHT",
    "silog",
    "plain_l1",
    "metric_log_l1",
    "edge_loss",
    "multiscale_silog",
    "video_normalize",
    "temporal_reg",
    "total_objective",
]

TEMPORAL_WEIGHT = 0.01


def _values(x) -> np.ndarray:
    arr = x.values if isinstance(x, DepthMap) else np.asarray(x)
    return arr.astype(np.float64, copy=False)


def _flags(x) -> np.ndarray:
    arr = x.flags if isinstance(x, ValidMask) else np.asarray(x)
    return arr.astype(bool, copy=False)


def _check(pred, gt, mask) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    p, g, m = _values(pred), _values(gt), _flags(mask)
    if p.shape != g.shape or p.shape != m.shape:
        raise ValueError(f"shape mismatch: pred {p.shape}, gt {g.shape}, mask {m.shape}")
    if not m.any():
        raise ValueError("mask has no valid pixel")
    if (p[m] <= 0).any():
        raise ValueError("prediction must be strictly positive on valid pixels")
    if (g[m] <= 0).any():
        raise ValueError("ground truth must be strictly positive on valid pixels")
    return p, g, m


@dataclass(frozen=True)
class SilogConfig:
    """Scale-invariant log loss settings.

    ``variance_focus`` is the coefficient on the squared-mean term (0.5).
    ``sqrt_guard`` floors the radicand so the square root keeps a bounded
    derivative near a perfect fit; the gradient is defined as 0 there.
    """

    variance_focus: float = 0.5
    sqrt_guard: float = 1e-12

    def __post_init__(self) -> None:
        if not 0.0 < self.variance_focus <= 1.0:
            raise ValueError("variance_focus must lie in (0, 1]")
        if self.sqrt_guard < 0:
            raise ValueError("sqrt_guard must be >= 0")


@dataclass(frozen=True)
class MultiScaleConfig:
    """Per-level weights for deep supervision; all 1 by default."""

    level_weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self) -> None:
        if len(self.level_weights) != NUM_LEVELS:
            raise ValueError(f"need {NUM_LEVELS} level weights")
        if any(w < 0 for w in self.level_weights):
            raise ValueError("level weights must be >= 0")


@dataclass(frozen=True)
class VideoNormalization:
    """Robust per-video depth normalization constants.

    ``median`` and ``mad`` (mean absolute deviation from the median) are
    computed once over all frames' valid pixels of one video.
    """

    median: float
    mad: float

    def __post_init__(self) -> None:
        if self.mad <= 0:
            raise ValueError("mad must be > 0")


def silog(pred, gt, mask, cfg: SilogConfig = SilogConfig(), want_grad: bool = True):
    """Scale-invariant logarithmic loss.

    value = sqrt(mean(d^2) - vf * mean(d)^2) with d = log(gt) - log(pred)
    over valid pixels.
    """
    p, g, m = _check(pred, gt, mask)
    d = np.where(m, np.log(np.where(m, g, 1.0)) - np.log(np.where(m, p, 1.0)), 0.0)
    n = m.sum()
    s1 = d.sum() / n
    s2 = (d * d).sum() / n
    radicand = s2 - cfg.variance_focus * s1 * s1
    value = float(math.sqrt(max(radicand, cfg.sqrt_guard)))
    if not want_grad:
        return value, None
    grad = np.zeros_like(p)
    if radicand > cfg.sqrt_guard:
        grad = np.where(m, -(d - cfg.variance_focus * s1) / (n * value * np.where(m, p, 1.0)), 0.0)
    return value, grad


def plain_l1(pred, gt, mask, want_grad: bool = True):
    """Mean absolute error on metric depth (linear domain)."""
    p, g, m = _check(pred, gt, mask)
    n = m.sum()
    value = float(np.abs(g - p)[m].sum() / n)
    if not want_grad:
        return value, None
    grad = np.where(m, np.sign(p - g) / n, 0.0)
    return value, grad


def metric_log_l1(pred, gt, mask, want_grad: bool = True):
    """Mean absolute error of log depth; relative, so far range is compressed."""
    p, g, m = _check(pred, gt, mask)
    d = np.where(m, np.log(np.where(m, g, 1.0)) - np.log(np.where(m, p, 1.0)), 0.0)
    n = m.sum()
    value = float(np.abs(d).sum() / n)
    if not want_grad:
        return value, None
    grad = np.where(m, -np.sign(d) / (n * np.where(m, p, 1.0)), 0.0)
    return value, grad


def edge_loss(pred, gt, mask, want_grad: bool = True):
    """Forward-difference log-gradient mismatch, for sharp boundaries.

    A pixel's horizontal (vertical) term is 0 when its right (down)
    neighbor is outside the image or invalid; the normalizer stays the
    number of valid pixels.
    """
    p, g, m = _check(pred, gt, mask)
    lp = np.log(np.where(m, p, 1.0))
    lg = np.log(np.where(m, g, 1.0))
    n = m.sum()

    pair_x = m[:, :-1] & m[:, 1:]
    pair_y = m[:-1, :] & m[1:, :]
    dx = np.where(pair_x, (lg[:, 1:] - lg[:, :-1]) - (lp[:, 1:] - lp[:, :-1]), 0.0)
    dy = np.where(pair_y, (lg[1:, :] - lg[:-1, :]) - (lp[1:, :] - lp[:-1, :]), 0.0)
    value = float((np.abs(dx).sum() + np.abs(dy).sum()) / n)
    if not want_grad:
        return value, None

    # d/dlog(pred): +sign at the pair's base pixel, -sign at its neighbor.
    coeff = np.zeros_like(p)
    sx = np.sign(dx) * pair_x
    sy = np.sign(dy) * pair_y
    coeff[:, :-1] += sx
    coeff[:, 1:] -= sx
    coeff[:-1, :] += sy
    coeff[1:, :] -= sy
    grad = np.where(m, coeff / (n * np.where(m, p, 1.0)), 0.0)
    return value, grad


def multiscale_silog(
    pred_pyramid: Sequence,
    gt_pyramid: GtPyramid | Sequence,
    cfg: MultiScaleConfig = MultiScaleConfig(),
    silog_cfg: SilogConfig = SilogConfig(),
    want_grad: bool = True,
):
    """Weighted sum of per-level silog terms over a 4-level pyramid.

    Returns (value, per-level values, per-level gradients).
    """
    if isinstance(gt_pyramid, GtPyramid):
        gt_levels = [(gt_pyramid.depth(l).values, gt_pyramid.mask(l).flags) for l in range(1, NUM_LEVELS + 1)]
    else:
        gt_levels = [( _values(d), _flags(msk)) for d, msk in gt_pyramid]
    if len(pred_pyramid) != NUM_LEVELS or len(gt_levels) != NUM_LEVELS:
        raise ValueError(f"pyramids must hold {NUM_LEVELS} levels")
    total = 0.0
    per_level: list[float] = []
    grads: list[Optional[np.ndarray]] = []
    for (pred_l, (gt_l, mask_l), w) in zip(pred_pyramid, gt_levels, cfg.level_weights):
        v, gr = silog(pred_l, gt_l, mask_l, silog_cfg, want_grad=want_grad)
        per_level.append(v)
        total += w * v
        grads.append(None if gr is None else w * gr)
    return float(total), per_level, (grads if want_grad else None)


def video_normalize(preds: Sequence, masks: Sequence):
    """Normalize a video's predictions by the pooled median and MAD.

    Returns (normalized maps, VideoNormalization).  Invalid pixels are 0 in
    the outputs.  Raises when the video is constant (MAD would be 0).
    """
    if len(preds) != len(masks) or not preds:
        raise ValueError("preds and masks must be equal-length, nonempty lists")
    pv = [_values(p) for p in preds]
    mv = [_flags(m) for m in masks]
    pooled = np.concatenate([p[m] for p, m in zip(pv, mv)])
    if pooled.size == 0:
        raise ValueError("no valid pixel in the video")
    median = float(np.median(pooled))
    mad = float(np.abs(pooled - median).mean())
    if mad == 0.0:
        raise ValueError("constant video: mean absolute deviation is 0")
    norm = VideoNormalization(median=median, mad=mad)
    normalized = [np.where(m, (p - median) / mad, 0.0) for p, m in zip(pv, mv)]
    return normalized, norm


def temporal_reg(normalized: Sequence, masks: Sequence, want_grad: bool = True):
    """Mean absolute frame-to-frame change of normalized depth.

    A pixel contributes to the (t, t+1) term only when valid in both
    frames; each pair term is normalized by its own valid count.
    """
    T = len(normalized)
    if T < 2:
        raise ValueError("temporal regularizer needs at least 2 frames")
    if len(masks) != T:
        raise ValueError("masks length must match frames")
    nv = [_values(x) for x in normalized]
    mv = [_flags(m) for m in masks]
    shape = nv[0].shape
    if any(x.shape != shape for x in nv):
        raise ValueError("consecutive frames must share one shape")

    value = 0.0
    grads = [np.zeros(shape) for _ in range(T)] if want_grad else None
    for t in range(T - 1):
        pair = mv[t] & mv[t + 1]
        n = pair.sum()
        if n == 0:
            continue
        diff = np.where(pair, nv[t + 1] - nv[t], 0.0)
        value += float(np.abs(diff).sum() / n)
        if want_grad:
            s = np.sign(diff) / (n * (T - 1))
            grads[t + 1] += s
            grads[t] -= s
    value /= T - 1
    return value, grads


@dataclass(frozen=True)
class AblationToggles:
    """Enabled components of the training objective.

    Exactly one of ``plain_l1`` / ``silog`` is the base supervision term.
    ``est`` and ``multi_level_temporal`` are consumed by the training
    harness and model rather than the objective itself.
    """

    silog: bool = True
    plain_l1: bool = False
    est: bool = False
    metric_loss: bool = False
    edge_loss: bool = False
    multi_level_temporal: bool = False
    multi_scale: bool = False
    temporal_reg: bool = False

    def __post_init__(self) -> None:
        if self.silog == self.plain_l1:
            raise ValueError("exactly one of plain_l1 / silog must be the base term")

    def to_flags(self) -> list[str]:
        return [f.name for f in fields(self) if getattr(self, f.name)]

    @classmethod
    def from_flags(cls, flags: Sequence[str]) -> "AblationToggles":
        known = {f.name for f in fields(cls)}
        unknown = [f for f in flags if f not in known]
        if unknown:
            raise ValueError(f"unknown toggle flags {unknown}; known: {sorted(known)}")
        kwargs = {name: name in flags for name in known}
        return cls(**kwargs)


# Incremental ablation rows, by the configuration names used in reports.
ABLATION_ROWS: dict[str, AblationToggles] = {
    "FlashDepth": AblationToggles(silog=False, plain_l1=True),
    "FlashDepth with SiLog": AblationToggles(),
    "+ EST": AblationToggles(est=True),
    "+ Metric loss": AblationToggles(est=True, metric_loss=True),
    "+ Edge loss": AblationToggles(est=True, metric_loss=True, edge_loss=True),
    "+ Multi-level temp.": AblationToggles(
        est=True, metric_loss=True, edge_loss=True, multi_level_temporal=True
    ),
    "+ Multi-scale sup.": AblationToggles(
        est=True, metric_loss=True, edge_loss=True, multi_level_temporal=True, multi_scale=True
    ),
    "+ Temporal reg.": AblationToggles(
        est=True,
        metric_loss=True,
        edge_loss=True,
        multi_level_temporal=True,
        multi_scale=True,
        temporal_reg=True,
    ),
}


def resolve_ablation_row(name: str) -> AblationToggles:
    """Look up an ablation row by name, tolerant of case and spacing."""
    if name in ABLATION_ROWS:
        return ABLATION_ROWS[name]
    folded = name.lower().replace(" ", "").replace("+", "").replace(".", "")
    for key, toggles in ABLATION_ROWS.items():
        if folded == key.lower().replace(" ", "").replace("+", "").replace(".", ""):
            return toggles
    raise ValueError(f"unknown ablation row {name!r}; known rows: {list(ABLATION_ROWS)}")


@dataclass(frozen=True)
class LossBreakdown:
    """Per-component values of the window objective.

    ``ms``, ``metric`` and ``edge`` are averaged over the window's frames;
    ``temporal`` is the raw regularizer value, weighted by 0.01 inside
    ``total``.  ``per_level_silog`` holds the time-averaged base term per
    level (the finest slot carries the plain-l1 value on that baseline).
    """

    ms: float
    metric: float
    edge: float
    temporal: float
    total: float
    per_level_silog: tuple[float, float, float, float]
    temporal_skipped: bool = False

    def to_dict(self) -> dict:
        return {
            "ms": self.ms,
            "metric": self.metric,
            "edge": self.edge,
            "temporal": self.temporal,
            "total": self.total,
            "per_level_silog": list(self.per_level_silog),
            "temporal_skipped": self.temporal_skipped,
        }


def total_objective(
    pred_pyramids: Sequence[Sequence],
    gt_pyramids: Sequence[GtPyramid],
    toggles: AblationToggles,
    ms_cfg: MultiScaleConfig = MultiScaleConfig(),
    silog_cfg: SilogConfig = SilogConfig(),
    frozen_norm: Optional[VideoNormalization] = None,
    want_grad: bool = True,
):
    """Window objective: per-frame supervision plus temporal regularization.

    value = (1/T) * sum_t(ms + metric + edge) + 0.01 * temporal.  Disabled
    toggles contribute exactly 0.  The temporal term needs T >= 2; with a
    single frame it contributes 0 and ``temporal_skipped`` is set.  The
    normalization constants act as constants for the gradient (no gradient
    flows through median/MAD); pass ``frozen_norm`` to pin them explicitly.

    Returns (LossBreakdown, grads) where grads[t][l] is the gradient with
    respect to frame t's level-(l+1) prediction.
    """
    T = len(pred_pyramids)
    if T < 1 or len(gt_pyramids) != T:
        raise ValueError("need T >= 1 prediction pyramids with matching ground truth")

    preds = [[_values(level) for level in pyr] for pyr in pred_pyramids]
    grads = [[np.zeros_like(level) for level in pyr] for pyr in preds] if want_grad else None

    ms_sum = 0.0
    metric_sum = 0.0
    edge_sum = 0.0
    per_level_sum = np.zeros(NUM_LEVELS)

    for t in range(T):
        pyr = preds[t]
        gt = gt_pyramids[t]
        gt1, m1 = gt.depth(1).values, gt.mask(1).flags
        if toggles.plain_l1:
            v, gr = plain_l1(pyr[0], gt1, m1, want_grad=want_grad)
            ms_sum += v
            per_level_sum[0] += v
            if want_grad:
                grads[t][0] += gr / T
        elif toggles.multi_scale:
            v, per_level, grs = multiscale_silog(pyr, gt, ms_cfg, silog_cfg, want_grad=want_grad)
            ms_sum += v
            per_level_sum += np.asarray(per_level)
            if want_grad:
                for l, gr in enumerate(grs):
                    grads[t][l] += gr / T
        else:
            v, gr = silog(pyr[0], gt1, m1, silog_cfg, want_grad=want_grad)
            ms_sum += v
            per_level_sum[0] += v
            if want_grad:
                grads[t][0] += gr / T
        if toggles.metric_loss:
            v, gr = metric_log_l1(pyr[0], gt1, m1, want_grad=want_grad)
            metric_sum += v
            if want_grad:
                grads[t][0] += gr / T
        if toggles.edge_loss:
            v, gr = edge_loss(pyr[0], gt1, m1, want_grad=want_grad)
            edge_sum += v
            if want_grad:
                grads[t][0] += gr / T

    temporal_value = 0.0
    temporal_skipped = False
    if toggles.temporal_reg:
        if T < 2:
            temporal_skipped = True
        else:
            finest = [preds[t][0] for t in range(T)]
            masks = [gt_pyramids[t].mask(1).flags for t in range(T)]
            if frozen_norm is None:
                normalized, norm = video_normalize(finest, masks)
            else:
                norm = frozen_norm
                normalized = [
                    np.where(m, (p - norm.median) / norm.mad, 0.0) for p, m in zip(finest, masks)
                ]
            temporal_value, norm_grads = temporal_reg(normalized, masks, want_grad=want_grad)
            if want_grad:
                for t in range(T):
                    grads[t][0] += TEMPORAL_WEIGHT * norm_grads[t] / norm.mad

    ms_avg = ms_sum / T
    metric_avg = metric_sum / T
    edge_avg = edge_sum / T
    breakdown = LossBreakdown(
        ms=ms_avg,
        metric=metric_avg,
        edge=edge_avg,
        temporal=temporal_value,
        total=ms_avg + metric_avg + edge_avg + TEMPORAL_WEIGHT * temporal_value,
        per_level_silog=tuple((per_level_sum / T).tolist()),
        temporal_skipped=temporal_skipped,
    )
    return breakdown, grads
