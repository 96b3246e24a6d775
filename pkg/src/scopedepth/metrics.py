"""Depth evaluation metrics: pixelwise errors, threshold accuracy, boundary
F1 over a ratio-threshold sweep, per-frame scale alignment, and report
aggregation.

All statistics are computed over valid pixels only.  Predictions must be
strictly positive on valid pixels (log and ratio terms).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .types import DepthMap, ValidMask

__all__ = [
    "MetricRecord",
    "BoundaryF1Config",
    "ScaleTrace",
    "VideoSummary",
    "MetricReport",
    "pixel_metrics",
    "boundary_f1",
    "frame_scale",
    "frame_variance",
    "aggregate_report",
]

DEFAULT_SCALE_EPSILON = 1e-8

_ERROR_FIELDS = ("absrel", "sqrel", "rmse", "rmse_log", "l1", "delta1")


def _values(depth: DepthMap | np.ndarray) -> np.ndarray:
    arr = depth.values if isinstance(depth, DepthMap) else np.asarray(depth)
    return arr.astype(np.float64, copy=False)


def _flags(mask: ValidMask | np.ndarray) -> np.ndarray:
    arr = mask.flags if isinstance(mask, ValidMask) else np.asarray(mask)
    return arr.astype(bool, copy=False)


def _check_inputs(pred, gt, mask) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
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
class MetricRecord:
    """One frame's (or one aggregate's) metric values.

    ``boundary_f1`` is None until the boundary sweep has been run.
    """

    absrel: float
    sqrel: float
    rmse: float
    rmse_log: float
    l1: float
    delta1: float
    valid_pixel_count: int
    boundary_f1: Optional[float] = None

    def __post_init__(self) -> None:
        for name in _ERROR_FIELDS:
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if not 0.0 <= self.delta1 <= 1.0:
            raise ValueError(f"delta1 must lie in [0,1], got {self.delta1}")
        if self.boundary_f1 is not None and not 0.0 <= self.boundary_f1 <= 1.0:
            raise ValueError(f"boundary_f1 must lie in [0,1], got {self.boundary_f1}")

    def with_boundary_f1(self, value: float) -> "MetricRecord":
        return replace(self, boundary_f1=value)

    def to_dict(self) -> dict:
        return {
            "delta1": self.delta1,
            "absrel": self.absrel,
            "sqrel": self.sqrel,
            "rmse": self.rmse,
            "rmse_log": self.rmse_log,
            "l1": self.l1,
            "boundary_f1": self.boundary_f1,
            "valid_pixel_count": self.valid_pixel_count,
        }


@dataclass(frozen=True)
class BoundaryF1Config:
    """Threshold sweep for the scale-invariant boundary score.

    ``erosion_px`` only affects edge-map export, not the score itself.
    """

    t_min: float = 1.05
    t_max: float = 1.15
    num_thresholds: int = 10
    erosion_px: int = 3

    def __post_init__(self) -> None:
        if not 1.0 < self.t_min <= self.t_max:
            raise ValueError(f"need 1 < t_min <= t_max, got [{self.t_min}, {self.t_max}]")
        if self.num_thresholds < 1:
            raise ValueError("num_thresholds must be >= 1")
        if self.erosion_px < 0:
            raise ValueError("erosion_px must be >= 0")

    @property
    def thresholds(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.num_thresholds)

    @property
    def weights(self) -> np.ndarray:
        t = self.thresholds
        return t / t.sum()


@dataclass(frozen=True)
class ScaleTrace:
    """Per-frame alignment scales of one video and their spread.

    ``sigma`` is the population standard deviation of ``scales``; lower
    means a more temporally stable metric scale.
    """

    scales: tuple[float, ...]
    sigma: float
    epsilon: float


def pixel_metrics(pred: DepthMap | np.ndarray, gt: DepthMap | np.ndarray, mask: ValidMask | np.ndarray) -> MetricRecord:
    """Pixelwise depth errors and threshold accuracy over valid pixels.

    delta1 uses the strict inequality max(gt/pred, pred/gt) < 1.25.
    """
    p, g, m = _check_inputs(pred, gt, mask)
    pv, gv = p[m], g[m]
    diff = gv - pv
    log_diff = np.log(gv) - np.log(pv)
    ratio = np.maximum(gv / pv, pv / gv)
    return MetricRecord(
        absrel=float(np.mean(np.abs(diff) / gv)),
        sqrel=float(np.mean(diff**2 / gv)),
        rmse=float(np.sqrt(np.mean(diff**2))),
        rmse_log=float(np.sqrt(np.mean(log_diff**2))),
        l1=float(np.mean(np.abs(diff))),
        delta1=float(np.mean(ratio < 1.25)),
        valid_pixel_count=int(m.sum()),
    )


def _neighbor_ratios(values: np.ndarray, flags: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Max depth ratios of 4-connected pairs where both endpoints are valid.

    Returns (ratios, pair_valid) concatenating horizontal then vertical pairs.
    """
    h_valid = flags[:, :-1] & flags[:, 1:]
    v_valid = flags[:-1, :] & flags[1:, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        h_ratio = np.maximum(values[:, :-1] / values[:, 1:], values[:, 1:] / values[:, :-1])
        v_ratio = np.maximum(values[:-1, :] / values[1:, :], values[1:, :] / values[:-1, :])
    ratios = np.concatenate([h_ratio.ravel(), v_ratio.ravel()])
    valid = np.concatenate([h_valid.ravel(), v_valid.ravel()])
    return ratios, valid


def boundary_f1(
    pred: DepthMap | np.ndarray,
    gt: DepthMap | np.ndarray,
    mask: ValidMask | np.ndarray,
    cfg: BoundaryF1Config = BoundaryF1Config(),
) -> tuple[float, list[dict]]:
    """Scale-invariant boundary F1 with a per-threshold breakdown.

    A 4-connected pair is a boundary at threshold t when its depth ratio
    strictly exceeds t.  Degenerate thresholds (no boundary on either side)
    score 1; thresholds where exactly one side has boundaries score 0, so
    the threshold-proportional weights always sum to 1.
    """
    p, g, m = _check_inputs(pred, gt, mask)
    gt_ratio, pair_valid = _neighbor_ratios(g, m)
    pred_ratio, _ = _neighbor_ratios(p, m)
    if not pair_valid.any():
        raise ValueError("no valid 4-connected neighbor pair")
    gt_ratio = gt_ratio[pair_valid]
    pred_ratio = pred_ratio[pair_valid]

    breakdown: list[dict] = []
    weighted_sum = 0.0
    weight_total = 0.0
    for t, w in zip(cfg.thresholds, cfg.weights):
        gt_b = gt_ratio > t
        pred_b = pred_ratio > t
        n_gt = int(gt_b.sum())
        n_pred = int(pred_b.sum())
        tp = int((gt_b & pred_b).sum())
        if n_gt == 0 and n_pred == 0:
            f1 = 1.0
            precision = recall = None
        elif n_gt == 0 or n_pred == 0:
            f1 = 0.0
            precision = None if n_pred == 0 else tp / n_pred
            recall = None if n_gt == 0 else tp / n_gt
        else:
            precision = tp / n_pred
            recall = tp / n_gt
            f1 = 0.0 if tp == 0 else 2 * precision * recall / (precision + recall)
        weighted_sum += t * f1
        weight_total += t
        breakdown.append(
            {
                "threshold": float(t),
                "weight": float(w),
                "f1": f1,
                "precision": precision,
                "recall": recall,
                "gt_pairs": n_gt,
                "pred_pairs": n_pred,
                "true_positives": tp,
            }
        )
    # Dividing the threshold-weighted sum once keeps the perfect-match case
    # exactly 1.0 (the weights sum to 1 by construction).
    return float(weighted_sum / weight_total), breakdown


def frame_scale(
    pred: DepthMap | np.ndarray,
    gt: DepthMap | np.ndarray,
    mask: ValidMask | np.ndarray,
    epsilon: float = DEFAULT_SCALE_EPSILON,
) -> float:
    """Least-squares scale s minimizing sum((s*pred - gt)^2) over valid pixels."""
    p, g, m = _values(pred), _values(gt), _flags(mask)
    if p.shape != g.shape or p.shape != m.shape:
        raise ValueError(f"shape mismatch: pred {p.shape}, gt {g.shape}, mask {m.shape}")
    if not m.any():
        raise ValueError("mask has no valid pixel")
    pv, gv = p[m], g[m]
    return float(np.sum(pv * gv) / (np.sum(pv * pv) + epsilon))


def frame_variance(scales: Sequence[float], epsilon: float = DEFAULT_SCALE_EPSILON) -> ScaleTrace:
    """Population standard deviation of per-frame scales.

    ``epsilon`` records the value used upstream in ``frame_scale``.
    """
    arr = np.asarray(list(scales), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("scale list is empty")
    sigma = float(np.sqrt(np.mean((arr - arr.mean()) ** 2)))
    return ScaleTrace(scales=tuple(float(s) for s in arr), sigma=sigma, epsilon=epsilon)


@dataclass(frozen=True)
class VideoSummary:
    video_id: str
    frame_count: int
    mean: MetricRecord
    sigma: Optional[float] = None
    scales: Optional[tuple[float, ...]] = None
    fps: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "frame_count": self.frame_count,
            "mean": self.mean.to_dict(),
            "sigma": self.sigma,
            "scales": None if self.scales is None else list(self.scales),
            "fps": self.fps,
        }


@dataclass(frozen=True)
class MetricReport:
    """Per-video summaries plus two aggregates.

    ``cross_video_mean`` averages per-video means (each video weighted
    equally); ``pooled_mean`` averages over all frames (videos weighted by
    frame count).
    """

    videos: tuple[VideoSummary, ...]
    cross_video_mean: MetricRecord
    pooled_mean: MetricRecord

    def to_dict(self) -> dict:
        return {
            "videos": [v.to_dict() for v in self.videos],
            "cross_video_mean": self.cross_video_mean.to_dict(),
            "pooled_mean": self.pooled_mean.to_dict(),
        }

    def to_markdown(self) -> str:
        """Metric table (delta1, AbsRel, SqRel, RMSE, RMSE-log, L1, F1) plus a sigma table."""
        cols = ["delta1", "absrel", "sqrel", "rmse", "rmse_log", "l1", "boundary_f1"]
        headers = ["Video", "d1", "AbsRel", "SqRel", "RMSE", "RMSE log", "L1", "F1"]

        def fmt(v: Optional[float]) -> str:
            return "-" if v is None else f"{v:.4f}"

        def row(name: str, rec: MetricRecord) -> str:
            return "| " + " | ".join([name] + [fmt(getattr(rec, c)) for c in cols]) + " |"

        lines = [
            "| " + " | ".join(headers) + " |",
            "|" + "|".join(["---"] * len(headers)) + "|",
        ]
        for v in self.videos:
            lines.append(row(v.video_id, v.mean))
        lines.append(row("mean (videos)", self.cross_video_mean))
        lines.append(row("mean (frames)", self.pooled_mean))

        lines += ["", "| Video | sigma | FPS |", "|---|---|---|"]
        for v in self.videos:
            lines.append(f"| {v.video_id} | {fmt(v.sigma)} | {fmt(v.fps)} |")
        return "\n".join(lines) + "\n"


def _mean_records(records: Sequence[MetricRecord]) -> MetricRecord:
    f1s = [r.boundary_f1 for r in records]
    have_f1 = all(v is not None for v in f1s)
    return MetricRecord(
        absrel=float(np.mean([r.absrel for r in records])),
        sqrel=float(np.mean([r.sqrel for r in records])),
        rmse=float(np.mean([r.rmse for r in records])),
        rmse_log=float(np.mean([r.rmse_log for r in records])),
        l1=float(np.mean([r.l1 for r in records])),
        delta1=float(np.mean([r.delta1 for r in records])),
        valid_pixel_count=int(sum(r.valid_pixel_count for r in records)),
        boundary_f1=float(np.mean([float(v) for v in f1s])) if have_f1 else None,
    )


def aggregate_report(
    per_frame: Mapping[str, Sequence[MetricRecord]],
    sigmas: Optional[Mapping[str, ScaleTrace]] = None,
    fps: Optional[Mapping[str, float]] = None,
) -> MetricReport:
    """Aggregate per-frame records grouped by video id.

    Produces unweighted per-video means, the cross-video mean of those
    means, and a pooled frame-weighted mean.
    """
    if not per_frame:
        raise ValueError("no videos to aggregate")
    summaries: list[VideoSummary] = []
    all_frames: list[MetricRecord] = []
    for video_id in per_frame:
        records = list(per_frame[video_id])
        if not records:
            raise ValueError(f"video {video_id!r} has no frames")
        trace = sigmas.get(video_id) if sigmas else None
        summaries.append(
            VideoSummary(
                video_id=video_id,
                frame_count=len(records),
                mean=_mean_records(records),
                sigma=None if trace is None else trace.sigma,
                scales=None if trace is None else trace.scales,
                fps=None if fps is None else fps.get(video_id),
            )
        )
        all_frames.extend(records)
    return MetricReport(
        videos=tuple(summaries),
        cross_video_mean=_mean_records([s.mean for s in summaries]),
        pooled_mean=_mean_records(all_frames),
    )
