"""Temporal motion encoding and gaze feature extraction.

The observed motion is padded into a virtual sequence covering the full
horizon, lifted per frame from (translation, 6D orientation, pose
embedding) and run through a pre-norm transformer encoder. Gaze enters as
a track of per-point scene features selected by snapping each gaze point
to its nearest scene point.

Every residual branch ends in a zero-initialized projection, so a freshly
constructed encoder is the identity on top of the lifted input plus the
positional encoding. Deeper layers switch on as their output projections
move away from zero during training.
"""
from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from .core.rotations import rotation_encode
from .core.types import GazeSequence, MotionSequence, ScenePointCloud

MOTION_INPUT_DIM = 3 + 6 + 32


def positional_encoding(length: int, dim: int,
                        dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Fixed sinusoidal table, computed in float64 then cast."""
    position = torch.arange(length, dtype=torch.float64)[:, None]
    step = torch.arange(0, dim, 2, dtype=torch.float64)
    inv_freq = torch.exp(step * (-math.log(10000.0) / dim))
    table = torch.zeros(length, dim, dtype=torch.float64)
    table[:, 0::2] = torch.sin(position * inv_freq)
    table[:, 1::2] = torch.cos(position * inv_freq[: dim // 2])
    return table.to(dtype)


def zero_module(module: nn.Linear) -> nn.Linear:
    nn.init.zeros_(module.weight)
    if module.bias is not None:
        nn.init.zeros_(module.bias)
    return module


class MultiheadAttention(nn.Module):
    """Softmax attention with a zero-initialized output projection.

    With ``memory=None`` this is self-attention; otherwise the query
    sequence attends over the memory sequence (used for cross-attention
    and learned-query pooling).
    """

    def __init__(self, dim: int, heads: int, memory_dim: int | None = None):
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        memory_dim = dim if memory_dim is None else memory_dim
        self.heads = heads
        self.head_dim = dim // heads
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(memory_dim, dim)
        self.v_proj = nn.Linear(memory_dim, dim)
        self.out_proj = zero_module(nn.Linear(dim, dim))

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        b, t, _ = x.shape
        return x.view(b, t, self.heads, self.head_dim).transpose(1, 2)

    def forward(self, query: torch.Tensor,
                memory: torch.Tensor | None = None) -> torch.Tensor:
        memory = query if memory is None else memory
        q = self._split(self.q_proj(query))
        k = self._split(self.k_proj(memory))
        v = self._split(self.v_proj(memory))
        logits = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        attn = torch.softmax(logits, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(query.shape)
        return self.out_proj(out)


class FeedForward(nn.Sequential):
    def __init__(self, dim: int, hidden: int):
        super().__init__(nn.Linear(dim, hidden), nn.ReLU(),
                         zero_module(nn.Linear(hidden, dim)))


class EncoderLayer(nn.Module):
    """Pre-norm self-attention layer; identity at initialization."""

    def __init__(self, dim: int, heads: int, ff_dim: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = MultiheadAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.ff = FeedForward(dim, ff_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.ff(self.norm2(x))


class MotionEncoder(nn.Module):
    """Lift + sinusoidal positions + stack of pre-norm encoder layers."""

    def __init__(self, dim: int = 256, layers: int = 6, heads: int = 8,
                 ff_dim: int = 1024, use_positional: bool = True):
        super().__init__()
        self.dim = dim
        self.use_positional = use_positional
        self.lift = nn.Linear(MOTION_INPUT_DIM, dim)
        self.layers = nn.ModuleList(
            EncoderLayer(dim, heads, ff_dim) for _ in range(layers))

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        """[B, T, 41] per-frame inputs -> [B, T, dim] embeddings."""
        if features.shape[-1] != MOTION_INPUT_DIM:
            raise ValueError(
                f"expected {MOTION_INPUT_DIM} input channels, "
                f"got {features.shape[-1]}")
        h = self.lift(features)
        if self.use_positional:
            h = h + positional_encoding(h.shape[1], self.dim, h.dtype)
        for layer in self.layers:
            h = layer(h)
        return h


class GazeEncoder(nn.Module):
    """Single self-attention layer over the gaze feature track."""

    def __init__(self, scene_dim: int, dim: int, heads: int = 8,
                 ff_dim: int = 1024):
        super().__init__()
        self.dim = dim
        self.lift = nn.Linear(scene_dim, dim)
        self.layer = EncoderLayer(dim, heads, ff_dim)

    def forward(self, track: torch.Tensor) -> torch.Tensor:
        """[B, T+dT, scene_dim] gaze feature track -> [B, T+dT, dim]."""
        h = self.lift(track) + positional_encoding(
            track.shape[1], self.dim, track.dtype)
        return self.layer(h)


def motion_input_features(seq: MotionSequence) -> np.ndarray:
    """Per-frame (translation, 6D orientation, pose embedding) rows."""
    rows = [np.concatenate([f.translation, rotation_encode(f.orientation),
                            f.pose_embedding]) for f in seq.frames]
    return np.stack(rows)


def gaze_to_scene_index(gaze_point: np.ndarray, scene: ScenePointCloud) -> int:
    """Nearest scene point to the gaze coordinate, lowest index on ties."""
    g = np.asarray(gaze_point, dtype=np.float64)
    if g.shape != (3,) or not np.all(np.isfinite(g)):
        raise ValueError(f"gaze point must be a finite 3-vector, got {g!r}")
    d2 = np.sum((scene.points - g) ** 2, axis=1)
    return int(np.argmin(d2))


def gaze_track_indices(gaze: GazeSequence, scene: ScenePointCloud) -> np.ndarray:
    return np.array([gaze_to_scene_index(p, scene) for p in gaze.points],
                    dtype=np.int64)


def build_gaze_track(point_features: torch.Tensor, gaze_idx: torch.Tensor,
                     total_frames: int) -> torch.Tensor:
    """Select per-frame scene features and pad with the last frame.

    ``point_features`` is [B, n, c], ``gaze_idx`` is [B, T] with T ≤
    ``total_frames``; the returned track is [B, total_frames, c].
    """
    observed = gaze_idx.shape[1]
    if observed > total_frames:
        raise ValueError(
            f"gaze length {observed} exceeds horizon {total_frames}")
    batch = torch.arange(point_features.shape[0],
                         device=point_features.device)[:, None]
    track = point_features[batch, gaze_idx]
    if observed < total_frames:
        pad = track[:, -1:, :].expand(-1, total_frames - observed, -1)
        track = torch.cat([track, pad], dim=1)
    return track


def encode_motion(padded: MotionSequence, encoder: MotionEncoder) -> torch.Tensor:
    """Single-sequence wrapper: MotionSequence -> [T, dim] embedding."""
    features = torch.as_tensor(motion_input_features(padded),
                               dtype=next(encoder.parameters()).dtype)
    return encoder(features[None])[0]


def encode_gaze(gaze: GazeSequence, point_features: torch.Tensor,
                scene: ScenePointCloud, encoder: GazeEncoder,
                total_frames: int) -> torch.Tensor:
    """Single-sequence wrapper: gaze track selection, padding, encoding."""
    if len(gaze.points) > total_frames:
        raise ValueError("gaze sequence longer than the prediction horizon")
    idx = torch.as_tensor(gaze_track_indices(gaze, scene))
    track = build_gaze_track(point_features[None], idx[None], total_frames)
    return encoder(track)[0]
