"""Command-line harness.

Subcommands: ``eval``, ``train-toy``, ``stream-bench``, ``augment-preview``,
``export-edges``.  Data outputs are deterministic (no timestamps); run
provenance goes into a ``*.meta.json`` sidecar.  On failure a
machine-readable error record is printed to stderr and the exit code is
nonzero.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from importlib import metadata
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .augment import AugmentConfig, AugmentPolicy, GeometricConfig, PHOTOMETRIC_KINDS, PhotometricOp, apply_geometric, apply_photometric, sample_config
from .bench import stream_bench
from .edges import edge_map, overlay_edges
from .losses import ABLATION_ROWS, AblationToggles, resolve_ablation_row
from .manifest import BUNDLED_MANIFESTS, SplitManifest, load_bundled_manifest, parse_manifest
from .metrics import BoundaryF1Config, MetricRecord, aggregate_report, boundary_f1, frame_scale, frame_variance, pixel_metrics
from .model import load_checkpoint, save_checkpoint
from .pfm import read_pfm
from .png16 import DEFAULT_DEPTH_SCALE, read_depth_png16
from .synthetic import TubeConfig
from .train import TrainConfig, train_toy
from .types import DepthMap, RgbFrame, ValidMask

__all__ = ["main"]


def _toolkit_version() -> str:
    try:
        return metadata.version("scopedepth")
    except metadata.PackageNotFoundError:  # pragma: no cover - source checkout
        return "unknown"


def _config_hash(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_sidecar(out_dir: Path, name: str, config: dict) -> None:
    _write_json(
        out_dir / f"{name}.meta.json",
        {"toolkit_version": _toolkit_version(), "config_hash": _config_hash(config)},
    )


def _read_depth_file(path: Path, depth_scale: float) -> DepthMap:
    if path.suffix.lower() == ".pfm":
        return read_pfm(path.read_bytes())
    if path.suffix.lower() == ".png":
        return read_depth_png16(path.read_bytes(), depth_scale)
    raise ValueError(f"unsupported depth file type: {path.name}")


def _save_rgb(path: Path, rgb: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray((np.clip(rgb, 0, 1) * 255).round().astype(np.uint8)).save(path)


def _load_rgb(path: Path) -> RgbFrame:
    img = Image.open(path).convert("RGB")
    return RgbFrame(np.asarray(img, dtype=np.float64) / 255.0)


# -- eval ----------------------------------------------------------------------


def _find_depth_files(video_dir: Path) -> list[Path]:
    files = sorted(p for p in video_dir.iterdir() if p.suffix.lower() in (".pfm", ".png"))
    if not files:
        raise FileNotFoundError(f"no depth files in {video_dir}")
    return files


def _resolve_manifest(spec: Optional[str]) -> Optional[SplitManifest]:
    if spec is None:
        return None
    if spec in BUNDLED_MANIFESTS or spec in ("split1", "split2"):
        return load_bundled_manifest(spec)
    return parse_manifest(Path(spec).read_text(encoding="utf-8"))


def cmd_eval(args: argparse.Namespace) -> int:
    pred_root = Path(args.pred)
    gt_root = Path(args.gt)
    out_dir = Path(args.out)
    if not pred_root.is_dir():
        raise FileNotFoundError(f"prediction directory not found: {pred_root}")
    if not gt_root.is_dir():
        raise FileNotFoundError(f"ground-truth directory not found: {gt_root}")
    manifest = _resolve_manifest(args.manifest)
    cfg = BoundaryF1Config(
        t_min=args.boundary_tmin, t_max=args.boundary_tmax, num_thresholds=args.boundary_n
    )

    video_dirs = sorted(p for p in pred_root.iterdir() if p.is_dir())
    if not video_dirs:
        raise FileNotFoundError(f"no video directories under {pred_root}")

    per_frame: dict[str, list[MetricRecord]] = {}
    traces = {}
    for video_dir in video_dirs:
        video_id = video_dir.name
        pred_files = _find_depth_files(video_dir)
        if manifest is not None:
            entries = manifest.by_sequence_id()
            if video_id not in entries:
                raise ValueError(f"video {video_id!r} not present in the manifest")
            expected = entries[video_id].frames
            if len(pred_files) != expected:
                raise ValueError(
                    f"video {video_id!r}: manifest expects {expected} frames, found {len(pred_files)}"
                )
        records: list[MetricRecord] = []
        scales: list[float] = []
        for pred_file in pred_files:
            gt_file = None
            for ext in (".pfm", ".png"):
                candidate = gt_root / video_id / (pred_file.stem + ext)
                if candidate.exists():
                    gt_file = candidate
                    break
            if gt_file is None:
                raise FileNotFoundError(
                    f"missing ground-truth frame for {video_id}/{pred_file.stem}"
                )
            pred = _read_depth_file(pred_file, args.depth_scale)
            gt = _read_depth_file(gt_file, args.depth_scale)
            mask = ValidMask.from_depth(gt)
            record = pixel_metrics(pred, gt, mask)
            f1, _ = boundary_f1(pred, gt, mask, cfg)
            records.append(record.with_boundary_f1(f1))
            scales.append(frame_scale(pred, gt, mask))
        per_frame[video_id] = records
        traces[video_id] = frame_variance(scales)

    report = aggregate_report(per_frame, sigmas=traces)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "report.json", report.to_dict())
    (out_dir / "report.md").write_text(report.to_markdown(), encoding="utf-8")
    _write_sidecar(
        out_dir,
        "report",
        {
            "pred": str(args.pred),
            "gt": str(args.gt),
            "manifest": args.manifest,
            "depth_scale": args.depth_scale,
            "boundary": [cfg.t_min, cfg.t_max, cfg.num_thresholds],
        },
    )
    print(f"evaluated {len(video_dirs)} videos -> {out_dir / 'report.json'}")
    return 0


# -- train-toy -------------------------------------------------------------------


def cmd_train_toy(args: argparse.Namespace) -> int:
    if args.row is not None:
        toggles = resolve_ablation_row(args.row)
    elif args.toggles is not None:
        toggles = AblationToggles.from_flags([t for t in args.toggles.split(",") if t])
    else:
        toggles = resolve_ablation_row("+ Temporal reg.")
    config = TrainConfig(
        steps=args.steps,
        lr=args.lr,
        seed=args.seed,
        size=args.size,
        window=args.window,
        toggles=toggles,
        tube=TubeConfig(flicker_amp=args.flicker),
    )
    result = train_toy(config, log=lambda msg: print(msg, flush=True))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "curves.csv").write_text(result.curves_csv(), encoding="utf-8")
    (out_dir / "checkpoint.bin").write_bytes(save_checkpoint(result.params))
    summary = result.to_summary()
    summary["row"] = args.row
    _write_json(out_dir / "result.json", summary)
    _write_sidecar(out_dir, "result", {"row": args.row, "toggles": toggles.to_flags(), "seed": args.seed, "steps": args.steps})
    print(
        f"trained {args.steps} steps: total {result.initial_total:.4f} -> {result.final_total:.4f}, "
        f"val sigma {result.val_sigma:.5f}"
    )
    return 0


# -- stream-bench -----------------------------------------------------------------


def cmd_stream_bench(args: argparse.Namespace) -> int:
    params = load_checkpoint(Path(args.checkpoint).read_bytes())
    result = stream_bench(params, num_frames=args.frames, seed=args.seed)
    if not result.state_constant:
        raise AssertionError("temporal state memory varied across frames")
    payload = result.to_dict()
    lo, hi = result.slope_ci95
    payload["slope_ci_contains_zero"] = bool(lo <= 0.0 <= hi)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "bench.json", payload)
    _write_sidecar(out_dir, "bench", {"checkpoint": str(args.checkpoint), "frames": args.frames, "seed": args.seed})
    print(
        f"{args.frames} frames: {result.fps_compute:.2f} FPS compute, "
        f"state {result.state_bytes[0]} bytes/frame, slope CI {lo:.3e}..{hi:.3e} s/frame"
    )
    return 0


# -- augment-preview ---------------------------------------------------------------


def _policy_preset(name: str) -> AugmentPolicy:
    presets = {
        "default": AugmentPolicy(),
        "always": AugmentPolicy.always(),
        "disabled": AugmentPolicy.disabled(),
    }
    if name not in presets:
        raise ValueError(f"unknown policy preset {name!r}; choose from {sorted(presets)}")
    return presets[name]


def _center_square(frame: RgbFrame) -> RgbFrame:
    h, w = frame.shape
    side = min(h, w)
    top, left = (h - side) // 2, (w - side) // 2
    return RgbFrame(frame.values[top : top + side, left : left + side])


def cmd_augment_preview(args: argparse.Namespace) -> int:
    frame = _center_square(_load_rgb(Path(args.input)))
    policy = _policy_preset(args.policy)
    cfg = sample_config(args.seed, policy)
    sampled = {op.kind: op for op in cfg.photometric}

    panels: list[tuple[str, RgbFrame]] = [("input", frame)]
    geo = cfg.geometric
    for name, component in (
        ("rotation", GeometricConfig(quarter_turns=geo.quarter_turns)),
        ("hflip", GeometricConfig(hflip=geo.hflip)),
        ("vflip", GeometricConfig(vflip=geo.vflip)),
    ):
        transformed, _, _ = apply_geometric(frame, None, None, component)
        panels.append((name, transformed))
    for kind in PHOTOMETRIC_KINDS:
        op = sampled.get(kind)
        panels.append((kind, frame if op is None else apply_photometric(frame, op)))

    combined, _, _ = apply_geometric(frame, None, None, geo)
    for op in cfg.photometric:
        combined = apply_photometric(combined, op)
    panels.append(("combined", combined))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, (name, panel) in enumerate(panels):
        _save_rgb(out_dir / f"panel_{i:02d}_{name}.png", panel.values)
    side = panels[0][1].shape[0]
    cols = 5
    rows = -(-len(panels) // cols)
    grid = np.ones((rows * side, cols * side, 3))
    for i, (_, panel) in enumerate(panels):
        r, c = divmod(i, cols)
        grid[r * side : (r + 1) * side, c * side : (c + 1) * side] = panel.values
    _save_rgb(out_dir / "grid.png", grid)
    _write_json(out_dir / "config.json", cfg.to_dict())
    _write_sidecar(out_dir, "config", {"input": str(args.input), "seed": args.seed, "policy": args.policy})
    print(f"wrote {len(panels)} panels to {out_dir}")
    return 0


# -- export-edges ------------------------------------------------------------------


def cmd_export_edges(args: argparse.Namespace) -> int:
    pred_root = Path(args.pred)
    if not pred_root.is_dir():
        raise FileNotFoundError(f"prediction directory not found: {pred_root}")
    depth_files = sorted(
        p for p in pred_root.rglob("*") if p.suffix.lower() in (".pfm", ".png")
    )
    if not depth_files:
        raise FileNotFoundError(f"no depth files under {pred_root}")
    frames_root = Path(args.frames) if args.frames else None
    out_dir = Path(args.out)
    count = 0
    for path in depth_files:
        depth = _read_depth_file(path, args.depth_scale)
        edges = edge_map(depth, threshold=args.threshold, erosion_px=args.erosion)
        rel = path.relative_to(pred_root)
        if frames_root is not None:
            frame_path = (frames_root / rel).with_suffix(".png")
            if not frame_path.exists():
                raise FileNotFoundError(f"missing frame image {frame_path}")
            background = _load_rgb(frame_path).values
        else:
            vals = depth.values
            lo, hi = float(vals.min()), float(vals.max())
            gray = (vals - lo) / (hi - lo) if hi > lo else np.zeros_like(vals)
            background = np.repeat(gray[:, :, None], 3, axis=2)
        overlay = overlay_edges(background, edges)
        _save_rgb((out_dir / rel).with_suffix(".png"), overlay)
        count += 1
    _write_sidecar(out_dir, "edges", {"pred": str(args.pred), "threshold": args.threshold, "erosion": args.erosion})
    print(f"wrote {count} edge overlays to {out_dir}")
    return 0


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed")
    common.add_argument(
        "--depth-scale", type=float, default=DEFAULT_DEPTH_SCALE,
        help="mm per raw unit for 16-bit PNG depth files",
    )
    common.add_argument("--config", type=str, default=None, help="JSON file with argument overrides")
    common.add_argument("--out", type=str, default="out", help="output directory")

    parser = argparse.ArgumentParser(
        prog="scopedepth",
        description="Streaming endoscopic depth toolkit: evaluation, toy training, benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", parents=[common], help="evaluate predicted depth against ground truth")
    p.add_argument("--pred", required=True, help="directory of <video_id>/<frame>.pfm predictions")
    p.add_argument("--gt", required=True, help="directory of ground-truth depth files")
    p.add_argument("--manifest", default=None, help=f"manifest path or one of {BUNDLED_MANIFESTS}")
    p.add_argument("--boundary-tmin", type=float, default=1.05)
    p.add_argument("--boundary-tmax", type=float, default=1.15)
    p.add_argument("--boundary-n", type=int, default=10)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("train-toy", parents=[common], help="train the toy model on tube scenes")
    p.add_argument("--row", default=None, help=f"ablation row name, one of {list(ABLATION_ROWS)}")
    p.add_argument("--toggles", default=None, help="comma-separated toggle flags (overrides --row)")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--flicker", type=float, default=0.15)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("stream-bench", parents=[common], help="per-frame streaming benchmark")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--frames", type=int, default=256)
    p.set_defaults(func=cmd_stream_bench)

    p = sub.add_parser("augment-preview", parents=[common], help="panel grid of augmentation ops")
    p.add_argument("--input", required=True, help="input frame image")
    p.add_argument("--policy", default="default", choices=["default", "always", "disabled"])
    p.set_defaults(func=cmd_augment_preview)

    p = sub.add_parser("export-edges", parents=[common], help="edge-map overlays from depth files")
    p.add_argument("--pred", required=True)
    p.add_argument("--threshold", type=float, default=1.01)
    p.add_argument("--erosion", type=int, default=3)
    p.add_argument("--frames", default=None, help="directory of RGB frames to overlay onto")
    p.set_defaults(func=cmd_export_edges)
    return parser


def _apply_config_file(args: argparse.Namespace) -> argparse.Namespace:
    if getattr(args, "config", None):
        overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(overrides, dict):
            raise ValueError("--config file must hold a JSON object")
        for key, value in overrides.items():
            attr = key.replace("-", "_")
            if not hasattr(args, attr):
                raise ValueError(f"--config key {key!r} is not a known option")
            setattr(args, attr, value)
    return args


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config_file(args)
        return args.func(args)
    except Exception as exc:  # machine-readable error record
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
