"""Streaming monocular depth toolkit for endoscopic video.

Numerical core of a streaming depth-estimation pipeline: domain types and
depth-file I/O, evaluation metrics, training objectives with analytic
gradients, an augmentation pipeline, a recurrent temporal module with
constant-memory streaming, and a desk-scale trainable model.
"""

from .types import DepthMap, RgbFrame, ValidMask, VideoSequence
from .pfm import PfmError, read_pfm, write_pfm
from .png16 import DEFAULT_DEPTH_SCALE, read_depth_png16, write_depth_png16
from .manifest import ManifestEntry, ManifestError, SplitManifest, load_bundled_manifest, parse_manifest
from .pyramid import GtPyramid, build_gt_pyramid
from .metrics import (
    BoundaryF1Config,
    MetricRecord,
    MetricReport,
    ScaleTrace,
    aggregate_report,
    boundary_f1,
    frame_scale,
    frame_variance,
    pixel_metrics,
)
from .losses import (
    ABLATION_ROWS,
    AblationToggles,
    LossBreakdown,
    MultiScaleConfig,
    SilogConfig,
    VideoNormalization,
    edge_loss,
    metric_log_l1,
    multiscale_silog,
    plain_l1,
    silog,
    temporal_reg,
    total_objective,
    video_normalize,
)
from .augment import AugmentConfig, AugmentPolicy, PhotometricOp, apply_geometric, apply_photometric, apply_window, sample_config
from .temporal import (
    BlockState,
    MambaBlockParams,
    SsmParams,
    TemporalState,
    mamba_block_step,
    ssm_scan,
    ssm_step,
    temporal_module_step,
    zero_state,
)
from .model import (
    AdamState,
    DimSpec,
    ModelParams,
    PredictionPyramid,
    adam_update,
    decode_stream,
    encode,
    init_params,
    load_checkpoint,
    loss_and_grad,
    predict_video,
    save_checkpoint,
)
from .synthetic import TubeConfig, gen_tube_sequence
from .train import TrainConfig, TrainResult, train_toy
from .bench import BenchResult, stream_bench

__version__ = "0.1.0"
