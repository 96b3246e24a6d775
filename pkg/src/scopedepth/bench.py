"""Streaming benchmark: per-frame latency and recurrent-state memory.

Frames are synthesized lazily so the harness itself holds O(1) frames; the
model's hidden state is the only thing carried across frames.  The
latency-vs-index regression slope (with its confidence interval) is the
evidence that per-frame cost does not grow with sequence position.
"""

from __future__ import annotations

import gc
import time
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .model import ModelParams, decode_stream, encode
from .synthetic import TubeConfig, tube_frame

__all__ = ["BenchResult", "stream_bench"]


@dataclass(frozen=True)
class BenchResult:
    frame_count: int
    warmup: int
    compute_s: tuple[float, ...]  # model time per frame, seconds
    end_to_end_s: tuple[float, ...]  # including frame synthesis
    state_bytes: tuple[int, ...]
    slope_s_per_frame: float
    slope_ci95: tuple[float, float]
    fps_compute: float
    fps_end_to_end: float

    @property
    def state_constant(self) -> bool:
        return len(set(self.state_bytes)) == 1

    def to_dict(self) -> dict:
        return {
            "frame_count": self.frame_count,
            "warmup": self.warmup,
            "fps_compute": self.fps_compute,
            "fps_end_to_end": self.fps_end_to_end,
            "state_bytes": self.state_bytes[0] if self.state_constant else list(self.state_bytes),
            "state_constant": self.state_constant,
            "latency_mean_s": float(np.mean(self.compute_s[self.warmup:])),
            "slope_s_per_frame": self.slope_s_per_frame,
            "slope_ci95": list(self.slope_ci95),
        }


def stream_bench(
    params: ModelParams,
    num_frames: int,
    seed: int = 0,
    warmup: int = 5,
    use_temporal: bool = True,
    tube: TubeConfig = TubeConfig(),
) -> BenchResult:
    """Stream ``num_frames`` frames, timing each step and sampling state size."""
    if num_frames < 1:
        raise ValueError("num_frames must be >= 1")
    size = params.spec.input_size
    state = params.zero_temporal_state()
    compute_s: list[float] = []
    end_to_end_s: list[float] = []
    state_bytes: list[int] = []

    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for t in range(num_frames):
            t0 = time.perf_counter()
            frame, _, _ = tube_frame(tube, seed, t, size)
            t1 = time.perf_counter()
            pyr = encode(frame, params)
            _, state = decode_stream(pyr, state, params, use_temporal=use_temporal)
            t2 = time.perf_counter()
            compute_s.append(t2 - t1)
            end_to_end_s.append(t2 - t0)
            state_bytes.append(state.nbytes)
    finally:
        if gc_was_enabled:
            gc.enable()

    warm = min(warmup, max(num_frames - 2, 0))
    samples = np.asarray(compute_s[warm:])
    if samples.size >= 3:
        idx = np.arange(warm, num_frames, dtype=np.float64)
        fit = stats.linregress(idx, samples)
        dof = samples.size - 2
        t_crit = float(stats.t.ppf(0.975, dof))
        ci = (fit.slope - t_crit * fit.stderr, fit.slope + t_crit * fit.stderr)
        slope = float(fit.slope)
    else:
        slope, ci = 0.0, (0.0, 0.0)
    return BenchResult(
        frame_count=num_frames,
        warmup=warm,
        compute_s=tuple(compute_s),
        end_to_end_s=tuple(end_to_end_s),
        state_bytes=tuple(state_bytes),
        slope_s_per_frame=slope,
        slope_ci95=(float(ci[0]), float(ci[1])),
        fps_compute=float(1.0 / np.mean(samples)) if samples.size else float("nan"),
        fps_end_to_end=float(1.0 / np.mean(end_to_end_s[warm:])) if samples.size else float("nan"),
    )
