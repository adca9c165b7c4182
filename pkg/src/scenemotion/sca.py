"""Per-frame scene attention with a body-frame spatial bias.

Each predicted frame queries the scene points individually, so attention
can shift to whatever the body is about to interact with. Raw coordinates
enter only after being expressed in the predicted body frame of each
frame, which makes that pathway invariant to rigid transforms applied
jointly to the scene and the trajectory. The per-point spatial bias is
added to the softmax-normalized attention weights, so biased rows need
not sum to one.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
import torch
from torch import nn

from .core.rotations import quat_to_matrix
from .core.types import ScenePointCloud
from .motion_encoder import EncoderLayer, zero_module

_UNIT_TOL = 1e-6


def relative_normalize(scene: ScenePointCloud | np.ndarray,
                       traj_translation: np.ndarray,
                       traj_orientation: np.ndarray) -> np.ndarray:
    """Scene points in the body frame of each trajectory step.

    ``traj_orientation`` holds unit quaternions [K, 4]; output is
    [K, n, 3] with rel[k][i] = R(q_k)^T (S[i] - t_k).
    """
    points = scene.points if isinstance(scene, ScenePointCloud) else np.asarray(scene)
    trans = np.asarray(traj_translation, dtype=np.float64)
    quats = np.asarray(traj_orientation, dtype=np.float64)
    if trans.shape[0] != quats.shape[0]:
        raise ValueError("trajectory translation and orientation lengths differ")
    norms = np.linalg.norm(quats, axis=-1)
    if np.any(np.abs(norms - 1.0) > _UNIT_TOL):
        raise ValueError("orientations must be unit quaternions")
    rots = np.stack([quat_to_matrix(q) for q in quats])          # [K, 3, 3]
    diff = points[None, :, :] - trans[:, None, :]                # [K, n, 3]
    return np.einsum("kji,knj->kni", rots, diff)


def relative_normalize_torch(points: torch.Tensor, translation: torch.Tensor,
                             rotation: torch.Tensor) -> torch.Tensor:
    """Batched torch version: [B, n, 3], [B, K, 3], [B, K, 3, 3] -> [B, K, n, 3]."""
    diff = points[:, None, :, :] - translation[:, :, None, :]
    return torch.einsum("bkji,bknj->bkni", rotation, diff)


class SpatialBias(nn.Module):
    """Scalar per (frame, point) from the body-frame relative position.

    The output layer starts at zero so attention is purely content-based
    until training asks for a geometric prior.
    """

    def __init__(self, hidden: int = 1024):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(3, hidden), nn.ReLU(), zero_module(nn.Linear(hidden, 1)))

    def forward(self, rel: torch.Tensor) -> torch.Tensor:
        """[..., n, 3] -> [..., n]."""
        return self.mlp(rel).squeeze(-1)


def salience_weighted_values(local_salience: torch.Tensor,
                             spatial_bias: torch.Tensor,
                             values: torch.Tensor) -> torch.Tensor:
    """(s_l + s_spatial) applied to per-point values: -> [B, K, c]."""
    return torch.einsum("bkn,bnc->bkc", local_salience + spatial_bias, values)


class ScaBlock(nn.Module):
    """One local-attention block; identity on its input at initialization."""

    def __init__(self, dim: int, scene_dim: int, heads: int = 8,
                 ff_dim: int = 1024, mlp_hidden: int = 1024):
        super().__init__()
        self.attn_dim = dim
        self.pose_encoder = EncoderLayer(dim, heads, ff_dim)
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(scene_dim, dim)
        self.v_proj = nn.Linear(scene_dim, dim)
        self.spatial = SpatialBias(mlp_hidden)
        self.mlp = nn.Sequential(
            nn.Linear(2 * dim, mlp_hidden), nn.ReLU(),
            zero_module(nn.Linear(mlp_hidden, dim)))

    def forward(self, f_in: torch.Tensor, point_features: torch.Tensor,
                rel: torch.Tensor
                ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """f_in [B, K, c], point_features [B, n, c_s], rel [B, K, n, 3]."""
        if rel.shape[1] != f_in.shape[1]:
            raise ValueError(
                f"relative scene has {rel.shape[1]} frames, motion has "
                f"{f_in.shape[1]}")
        encoded = self.pose_encoder(f_in)
        q = self.q_proj(encoded)
        k = self.k_proj(point_features)
        logits = torch.einsum("bkc,bnc->bkn", q, k) / math.sqrt(self.attn_dim)
        local = torch.softmax(logits, dim=-1)
        bias = self.spatial(rel)
        fused = salience_weighted_values(local, bias, self.v_proj(point_features))
        out = f_in + self.mlp(torch.cat([encoded, fused], dim=-1))
        return out, local, bias


class ScaOutput(NamedTuple):
    values: torch.Tensor                  # [B, T+dT, c_m]
    local_salience: list[torch.Tensor]    # per block, [B, T+dT, n]
    spatial_bias: list[torch.Tensor]      # per block, [B, T+dT, n]


class ScaStack(nn.Module):
    """Chain of blocks sharing one predicted trajectory for S_rel."""

    def __init__(self, blocks: int, dim: int, scene_dim: int, heads: int = 8,
                 ff_dim: int = 1024, mlp_hidden: int = 1024):
        super().__init__()
        self.blocks = nn.ModuleList(
            ScaBlock(dim, scene_dim, heads, ff_dim, mlp_hidden)
            for _ in range(blocks))

    def forward(self, f_in: torch.Tensor, point_features: torch.Tensor,
                rel: torch.Tensor) -> ScaOutput:
        local, bias = [], []
        h = f_in
        for block in self.blocks:
            h, s_l, s_b = block(h, point_features, rel)
            local.append(s_l)
            bias.append(s_b)
        return ScaOutput(h, local, bias)
