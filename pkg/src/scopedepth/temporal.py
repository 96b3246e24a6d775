"""Streaming temporal core: selective state-space recurrence, gated
residual blocks, and the per-level module that carries hidden state from
one frame to the next.

The recurrence runs along time only; spatial tokens recur independently,
which makes per-frame streaming exactly equivalent to batched processing.
Per token and channel, with Delta = softplus(delta_w * x + delta_b) and
A = -exp(decay_log) < 0:

    Abar   = exp(Delta * A)              in (0, 1)
    h_next = Abar * h_prev + (Delta * input_proj) * x
    y      = sum_n output_proj * h_next + skip_gain * x

``ssm_scan`` recomputes the same recurrence with a doubling prefix scan
and serves as the batched reference the streaming path is checked against.

All forward code is written against the dual-backend helpers in ``tape``,
so it runs on raw numpy arrays (inference) and on Tensors (training, with
gradients through time).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tape
from .tape import exp, matmul, reduce_mean, reduce_sum, reshape, silu, softplus, sqrt

__all__ = [
    "BLOCKS_PER_LEVEL",
    "NUM_LEVELS",
    "SsmParams",
    "MambaBlockParams",
    "LevelTemporalParams",
    "BlockState",
    "TemporalState",
    "zero_state",
    "ssm_step",
    "ssm_scan",
    "mamba_block_step",
    "mamba_block_scan",
    "temporal_module_step",
    "temporal_module_scan",
    "init_ssm_params",
    "init_block_params",
    "init_level_params",
    "state_to_bytes",
    "state_from_bytes",
]

NUM_LEVELS = 4
BLOCKS_PER_LEVEL = 4

# decay_log such that Abar = exp(-exp(decay_log)) = 0.9 at Delta = 1.
DECAY_LOG_INIT = float(np.log(-np.log(0.9)))
# delta_b such that softplus(delta_b) = 1.
DELTA_BIAS_INIT = float(np.log(np.e - 1.0))

_RMSNORM_EPS = 1e-8


@dataclass
class SsmParams:
    """Per-channel recurrence parameters; arrays of shape (C, N) or (C,)."""

    decay_log: object  # (C, N); state matrix A = -exp(decay_log)
    input_proj: object  # (C, N)
    output_proj: object  # (C, N)
    skip_gain: object  # (C,)
    delta_w: object  # (C,)
    delta_b: object  # (C,)


@dataclass
class MambaBlockParams:
    """Gated residual block: pre-norm, expansion, SSM, projection back."""

    norm_gain: object  # (C,)
    w_in: object  # (C, Ci)
    w_gate: object  # (C, Ci)
    w_out: object  # (Ci, C)
    ssm: SsmParams  # over the Ci inner channels


@dataclass
class LevelTemporalParams:
    blocks: tuple[MambaBlockParams, ...]


@dataclass
class BlockState:
    """Recurrent hidden state of one block: (tokens, inner_channels, state_dim)."""

    h: object


@dataclass
class TemporalState:
    """Per-level, per-block hidden states carried from frame t to t+1."""

    levels: tuple[tuple[BlockState, ...], ...]

    def __post_init__(self) -> None:
        if len(self.levels) != NUM_LEVELS:
            raise ValueError(f"state must hold {NUM_LEVELS} levels, got {len(self.levels)}")
        for blocks in self.levels:
            if len(blocks) != BLOCKS_PER_LEVEL:
                raise ValueError(f"each level holds {BLOCKS_PER_LEVEL} block states")

    @property
    def nbytes(self) -> int:
        return sum(np.asarray(b.h.data if isinstance(b.h, tape.Tensor) else b.h).nbytes
                   for blocks in self.levels for b in blocks)


def zero_state(level_dims: Sequence[tuple[int, int, int]]) -> TemporalState:
    """All-zero state for the given (tokens, inner_channels, state_dim) per level.

    Used at every video start and at every training-window start.
    """
    if len(level_dims) != NUM_LEVELS:
        raise ValueError(f"need dims for {NUM_LEVELS} levels")
    levels = []
    for tokens, channels, state_dim in level_dims:
        if tokens < 1 or channels < 1 or state_dim < 1:
            raise ValueError(f"invalid level dims ({tokens}, {channels}, {state_dim})")
        levels.append(
            tuple(BlockState(np.zeros((tokens, channels, state_dim))) for _ in range(BLOCKS_PER_LEVEL))
        )
    return TemporalState(tuple(levels))


def ssm_step(x, h_prev, p: SsmParams):
    """One recurrence step: x (tokens, C), h_prev (tokens, C, N) -> (y, h_next)."""
    tokens, channels = x.shape
    delta = softplus(x * p.delta_w + p.delta_b)  # (tokens, C)
    delta3 = reshape(delta, (tokens, channels, 1))
    a = -exp(p.decay_log)  # (C, N), strictly negative
    abar = exp(delta3 * a)  # in (0, 1)
    inj = reshape(delta * x, (tokens, channels, 1)) * p.input_proj
    h_next = abar * h_prev + inj
    y = reduce_sum(h_next * p.output_proj, axis=2) + p.skip_gain * x
    return y, h_next


def ssm_scan(x_seq: np.ndarray, h_0: np.ndarray, p: SsmParams):
    """Batched reference recurrence over T frames via a doubling prefix scan.

    x_seq: (T, tokens, C); h_0: (tokens, C, N).  Returns (y_seq, h_T).
    numpy-only: this is the equivalence oracle for the streaming path.
    """
    x_seq = np.asarray(x_seq, dtype=np.float64)
    if x_seq.ndim != 3:
        raise ValueError(f"x_seq must be (T, tokens, C), got {x_seq.shape}")
    T, tokens, channels = x_seq.shape
    delta = tape.softplus(x_seq * np.asarray(p.delta_w) + np.asarray(p.delta_b))
    delta4 = delta[..., None]  # (T, tokens, C, 1)
    a = -np.exp(np.asarray(p.decay_log))
    abar = np.exp(delta4 * a)  # (T, tokens, C, N)
    inj = (delta * x_seq)[..., None] * np.asarray(p.input_proj)

    # Inclusive prefix composition of h -> Abar*h + b maps along the time axis.
    acc_a = abar.copy()
    acc_b = inj.copy()
    d = 1
    while d < T:
        acc_a_new = acc_a.copy()
        acc_b_new = acc_b.copy()
        acc_a_new[d:] = acc_a[d:] * acc_a[:-d]
        acc_b_new[d:] = acc_a[d:] * acc_b[:-d] + acc_b[d:]
        acc_a, acc_b = acc_a_new, acc_b_new
        d *= 2

    h_all = acc_a * np.asarray(h_0) + acc_b  # (T, tokens, C, N)
    y_seq = (h_all * np.asarray(p.output_proj)).sum(axis=3) + np.asarray(p.skip_gain) * x_seq
    return y_seq, h_all[-1]


def _rmsnorm(x, gain):
    ms = reduce_mean(x * x, axis=1, keepdims=True)
    return x / sqrt(ms + _RMSNORM_EPS) * gain


def mamba_block_step(x, h_prev, bp: MambaBlockParams):
    """Gated residual block around one SSM step; x (tokens, C) -> (y, h_next)."""
    u = _rmsnorm(x, bp.norm_gain)
    inner = matmul(u, bp.w_in)
    gate = silu(matmul(u, bp.w_gate))
    s, h_next = ssm_step(inner, h_prev, bp.ssm)
    y = x + matmul(gate * s, bp.w_out)
    return y, h_next


def mamba_block_scan(x_seq: np.ndarray, h_0: np.ndarray, bp: MambaBlockParams):
    """Batched block application over T frames (numpy reference path)."""
    x_seq = np.asarray(x_seq, dtype=np.float64)
    T, tokens, channels = x_seq.shape
    flat = x_seq.reshape(T * tokens, channels)
    u = _rmsnorm_seq(flat)
    u = u * np.asarray(bp.norm_gain)
    inner = (u @ np.asarray(bp.w_in)).reshape(T, tokens, -1)
    gate = tape.silu(u @ np.asarray(bp.w_gate)).reshape(T, tokens, -1)
    s_seq, h_T = ssm_scan(inner, h_0, bp.ssm)
    y = x_seq + ((gate * s_seq).reshape(T * tokens, -1) @ np.asarray(bp.w_out)).reshape(x_seq.shape)
    return y, h_T


def _rmsnorm_seq(flat: np.ndarray) -> np.ndarray:
    ms = (flat * flat).mean(axis=1, keepdims=True)
    return flat / np.sqrt(ms + _RMSNORM_EPS)


def temporal_module_step(features, states: Sequence[BlockState], params: LevelTemporalParams):
    """Run one level's block stack for one frame.

    Each block consumes and emits its own hidden state; returns the refined
    features and the updated states in block order.
    """
    if len(states) != len(params.blocks):
        raise ValueError(f"got {len(states)} states for {len(params.blocks)} blocks")
    x = features
    new_states = []
    for state, bp in zip(states, params.blocks):
        x, h_next = mamba_block_step(x, state.h, bp)
        new_states.append(BlockState(h_next))
    return x, tuple(new_states)


def temporal_module_scan(
    features_seq: np.ndarray, states: Sequence[BlockState], params: LevelTemporalParams
):
    """Batched reference for one level over a full sequence (numpy only)."""
    x = np.asarray(features_seq, dtype=np.float64)
    new_states = []
    for state, bp in zip(states, params.blocks):
        x, h_T = mamba_block_scan(x, np.asarray(state.h), bp)
        new_states.append(BlockState(h_T))
    return x, tuple(new_states)


# -- initialization -------------------------------------------------------


def init_ssm_params(rng: np.random.Generator, channels: int, state_dim: int) -> SsmParams:
    return SsmParams(
        decay_log=DECAY_LOG_INIT + 0.1 * rng.standard_normal((channels, state_dim)),
        input_proj=rng.standard_normal((channels, state_dim)) / np.sqrt(state_dim),
        output_proj=rng.standard_normal((channels, state_dim)) / np.sqrt(state_dim),
        skip_gain=np.ones(channels),
        delta_w=0.1 * rng.standard_normal(channels),
        delta_b=np.full(channels, DELTA_BIAS_INIT),
    )


def init_block_params(
    rng: np.random.Generator, channels: int, inner_channels: int, state_dim: int
) -> MambaBlockParams:
    def glorot(n_in: int, n_out: int) -> np.ndarray:
        limit = np.sqrt(6.0 / (n_in + n_out))
        return rng.uniform(-limit, limit, size=(n_in, n_out))

    return MambaBlockParams(
        norm_gain=np.ones(channels),
        w_in=glorot(channels, inner_channels),
        w_gate=glorot(channels, inner_channels),
        w_out=glorot(inner_channels, channels),
        ssm=init_ssm_params(rng, inner_channels, state_dim),
    )


def init_level_params(
    rng: np.random.Generator, channels: int, inner_channels: int, state_dim: int
) -> LevelTemporalParams:
    return LevelTemporalParams(
        tuple(
            init_block_params(rng, channels, inner_channels, state_dim)
            for _ in range(BLOCKS_PER_LEVEL)
        )
    )


# -- checkpointing ----------------------------------------------------------

_STATE_MAGIC = b"SDSTATE1"


def state_to_bytes(state: TemporalState) -> bytes:
    """Flat binary record: per level and block, a shape header plus raw float64."""
    parts = [_STATE_MAGIC, struct.pack("<I", len(state.levels))]
    for blocks in state.levels:
        parts.append(struct.pack("<I", len(blocks)))
        for block in blocks:
            h = np.ascontiguousarray(np.asarray(block.h, dtype=np.float64))
            parts.append(struct.pack("<I", h.ndim))
            parts.append(struct.pack(f"<{h.ndim}Q", *h.shape))
            parts.append(h.tobytes())
    return b"".join(parts)


def state_from_bytes(data: bytes) -> TemporalState:
    if not data.startswith(_STATE_MAGIC):
        raise ValueError("not a temporal-state record")
    pos = len(_STATE_MAGIC)

    def take(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise ValueError("truncated temporal-state record")
        out = struct.unpack_from(fmt, data, pos)
        pos += size
        return out

    (n_levels,) = take("<I")
    levels = []
    for _ in range(n_levels):
        (n_blocks,) = take("<I")
        blocks = []
        for _ in range(n_blocks):
            (ndim,) = take("<I")
            shape = take(f"<{ndim}Q")
            count = int(np.prod(shape)) if ndim else 1
            nbytes = 8 * count
            if pos + nbytes > len(data):
                raise ValueError("truncated temporal-state record")
            h = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(shape).copy()
            pos += nbytes
            blocks.append(BlockState(h))
        levels.append(tuple(blocks))
    if pos != len(data):
        raise ValueError("trailing bytes in temporal-state record")
    return TemporalState(tuple(levels))
