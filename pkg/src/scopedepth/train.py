"""Toy training on procedural tube scenes, with ablation toggles.

Each step samples a window from a seeded training video, optionally
augments it, evaluates the full objective with gradients through time, and
takes one Adam step.  Held-out quality is tracked as the frame-scale
spread (sigma) and mean scale-invariant log error on a validation video.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .augment import AugmentPolicy, apply_window, sample_config
from .losses import AblationToggles, LossBreakdown, MultiScaleConfig, SilogConfig, silog
from .metrics import ScaleTrace, frame_scale, frame_variance
from .model import AdamState, DimSpec, ModelParams, adam_update, init_params, loss_and_grad, predict_video
from .synthetic import TubeConfig, gen_tube_sequence
from .types import VideoSequence

__all__ = ["TrainConfig", "TrainResult", "train_toy", "evaluate_on_video"]


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 500
    lr: float = 1e-3
    seed: int = 0
    size: int = 64
    window: int = 5
    toggles: AblationToggles = field(
        default_factory=lambda: AblationToggles(
            est=True,
            metric_loss=True,
            edge_loss=True,
            multi_level_temporal=True,
            multi_scale=True,
            temporal_reg=True,
        )
    )
    train_frames: int = 48
    val_frames: int = 24
    eval_every: int = 100
    tube: TubeConfig = field(default_factory=lambda: TubeConfig(flicker_amp=0.15))
    channels: tuple[int, int, int, int] = (8, 16, 24, 32)
    expand: int = 2
    state_dim: int = 4

    def dim_spec(self) -> DimSpec:
        return DimSpec(
            input_size=self.size,
            channels=self.channels,
            expand=self.expand,
            state_dim=self.state_dim,
        )


@dataclass
class TrainResult:
    config: TrainConfig
    params: ModelParams
    initial_total: float
    final_total: float
    breakdowns: list[LossBreakdown]
    val_sigma: float
    val_silog: float
    val_trace: ScaleTrace

    def curves_csv(self) -> str:
        """Training curve as CSV: step, loss components, validation sigma."""
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["step", "ms", "metric", "edge", "temporal", "total", "val_sigma"])
        for i, b in enumerate(self.breakdowns, start=1):
            sigma = f"{self.val_sigma:.10g}" if i == len(self.breakdowns) else ""
            writer.writerow(
                [i, f"{b.ms:.10g}", f"{b.metric:.10g}", f"{b.edge:.10g}",
                 f"{b.temporal:.10g}", f"{b.total:.10g}", sigma]
            )
        return out.getvalue()

    def to_summary(self) -> dict:
        return {
            "steps": self.config.steps,
            "toggles": self.config.toggles.to_flags(),
            "initial_total": self.initial_total,
            "final_total": self.final_total,
            "val_sigma": self.val_sigma,
            "val_silog": self.val_silog,
        }


def evaluate_on_video(
    params: ModelParams, video: VideoSequence, use_temporal: bool
) -> tuple[ScaleTrace, float]:
    """Stream a video and report the scale trace and mean silog of the
    finest predictions against ground truth."""
    assert video.depths is not None and video.masks is not None
    scales: list[float] = []
    silogs: list[float] = []
    for t, (pred, _) in enumerate(predict_video(video.frames, params, use_temporal=use_temporal)):
        finest = pred.finest().values
        gt = video.depths[t]
        mask = video.masks[t]
        scales.append(frame_scale(finest, gt, mask))
        value, _ = silog(finest, gt, mask, want_grad=False)
        silogs.append(value)
    return frame_variance(scales), float(np.mean(silogs))


def train_toy(config: TrainConfig, log=None) -> TrainResult:
    """Run seeded toy training; deterministic in the config."""
    spec = config.dim_spec()
    train_video = gen_tube_sequence(config.seed, config.train_frames, config.size, config.tube)
    val_video = gen_tube_sequence(config.seed + 7919, config.val_frames, config.size, config.tube)
    if config.window > len(train_video):
        raise ValueError("window longer than the training video")

    params = init_params(config.seed, spec)
    adam = AdamState(lr=config.lr)
    rng = np.random.default_rng(config.seed + 104729)
    policy = AugmentPolicy()

    breakdowns: list[LossBreakdown] = []
    for step in range(1, config.steps + 1):
        start = int(rng.integers(0, len(train_video) - config.window + 1))
        window = train_video.window(start, config.window)
        if config.toggles.est:
            aug_cfg = sample_config(int(rng.integers(0, 2**32)), policy)
            window = apply_window(window, aug_cfg)
        breakdown, grads = loss_and_grad(window, params, config.toggles)
        params, adam = adam_update(params, grads, adam)
        breakdowns.append(breakdown)
        if log is not None and (step % 25 == 0 or step == 1):
            log(f"step {step}/{config.steps} total={breakdown.total:.4f}")

    if config.steps == 0:
        # Emit the initial-loss record only.
        window = train_video.window(0, config.window)
        breakdown, _ = loss_and_grad(window, params, config.toggles)
        breakdowns.append(breakdown)

    trace, val_silog = evaluate_on_video(
        params, val_video, use_temporal=config.toggles.multi_level_temporal
    )
    totals = [b.total for b in breakdowns]
    final_total = float(np.mean(totals[-10:])) if len(totals) >= 10 else totals[-1]
    return TrainResult(
        config=config,
        params=params,
        initial_total=totals[0],
        final_total=final_total,
        breakdowns=breakdowns,
        val_sigma=trace.sigma,
        val_silog=val_silog,
        val_trace=trace,
    )
