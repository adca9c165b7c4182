"""Prediction heads: trajectory, pose embedding, joints, GCN refinement."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .core.body import JOINT_PARENTS, BodyTensors
from .core.rotations import rot6d_to_matrix
from .core.types import JOINT_COUNT, POSE_EMBEDDING_DIM
from .motion_encoder import zero_module


class TrajectoryPlanner(nn.Module):
    """Per-frame linear map to translation plus 6D orientation."""

    def __init__(self, dim: int):
        super().__init__()
        self.head = nn.Linear(dim, 9)

    def forward(self, f_tia: torch.Tensor
                ) -> tuple[torch.Tensor, torch.Tensor]:
        """[B, K, c] -> translations [B, K, 3], rotations [B, K, 3, 3]."""
        out = self.head(f_tia)
        return out[..., :3], rot6d_to_matrix(out[..., 3:])


class PosePredictor(nn.Module):
    """Per-frame linear map to the pose embedding."""

    def __init__(self, dim: int):
        super().__init__()
        self.head = nn.Linear(dim, POSE_EMBEDDING_DIM)

    def forward(self, f_sca: torch.Tensor) -> torch.Tensor:
        return self.head(f_sca)


def reconstruct_joints(translation: torch.Tensor, rotation: torch.Tensor,
                       pose_embedding: torch.Tensor,
                       body: BodyTensors) -> torch.Tensor:
    """Differentiable joints [B, K, 23, 3] from the predicted pose tuple."""
    return body.joints(translation, rotation, pose_embedding)


def skeleton_adjacency(parents: tuple[int, ...] = JOINT_PARENTS) -> np.ndarray:
    """Kinematic tree edges plus self-loops, as a dense 0/1 matrix."""
    n = len(parents)
    adj = np.eye(n)
    for child, parent in enumerate(parents):
        if parent >= 0:
            adj[child, parent] = 1.0
            adj[parent, child] = 1.0
    return adj


class GraphConv(nn.Module):
    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.linear = nn.Linear(in_dim, out_dim)

    def forward(self, x: torch.Tensor, adj: torch.Tensor) -> torch.Tensor:
        """x [B, K, J, C], adj [J, J] -> [B, K, J, out]."""
        return self.linear(torch.einsum("ij,bkjc->bkic", adj, x))


class MotionDecoder(nn.Module):
    """Graph-convolutional refinement of reconstructed joint positions.

    The adjacency is the kinematic tree plus self-loops plus a learned
    residual, symmetrized and row-normalized by absolute row sums so the
    scale stays bounded when learned entries go negative. The final layer
    is zero-initialized, so a fresh decoder returns its input unchanged.
    """

    def __init__(self, width: int = 64, layers: int = 6,
                 parents: tuple[int, ...] = JOINT_PARENTS):
        super().__init__()
        if layers < 2:
            raise ValueError("decoder needs at least an input and output layer")
        joints = len(parents)
        base = torch.as_tensor(skeleton_adjacency(parents), dtype=torch.float32)
        self.register_buffer("base_adjacency", base)
        self.residual_adjacency = nn.Parameter(torch.zeros(joints, joints))
        convs = [GraphConv(3, width)]
        convs += [GraphConv(width, width) for _ in range(layers - 2)]
        convs.append(GraphConv(width, 3))
        zero_module(convs[-1].linear)
        self.convs = nn.ModuleList(convs)

    def adjacency(self) -> torch.Tensor:
        sym = (self.residual_adjacency + self.residual_adjacency.T) / 2
        adj = self.base_adjacency + sym
        return adj / adj.abs().sum(dim=1, keepdim=True).clamp_min(1e-6)

    def forward(self, joints: torch.Tensor) -> torch.Tensor:
        """[B, K, 23, 3] -> refined [B, K, 23, 3], full horizon preserved."""
        if joints.shape[-2:] != (JOINT_COUNT, 3):
            raise ValueError(
                f"expected [..., {JOINT_COUNT}, 3] joints, got "
                f"{tuple(joints.shape)}")
        adj = self.adjacency().to(joints.dtype)
        h = joints
        for conv in self.convs[:-1]:
            h = torch.relu(conv(h, adj))
        return joints + self.convs[-1](h, adj)


@dataclass
class PredictionBundle:
    """Single-episode prediction in numpy form, full horizon.

    Orientations are unit quaternions [K, 4]. Salience maps are stacked
    per attention block; empty arrays when the corresponding stream is
    disabled.
    """

    translations: np.ndarray            # [K, 3]
    orientations: np.ndarray            # [K, 4]
    pose_embeddings: np.ndarray         # [K, 32]
    joints: np.ndarray                  # [K, 23, 3]
    decoded: np.ndarray                 # [K, 23, 3]
    global_salience: np.ndarray = field(
        default_factory=lambda: np.zeros((0, 0)))        # [blocks, n]
    local_salience: np.ndarray = field(
        default_factory=lambda: np.zeros((0, 0, 0)))     # [blocks, K, n]

    def __post_init__(self):
        k = self.translations.shape[0]
        shapes = {
            "translations": (k, 3),
            "orientations": (k, 4),
            "pose_embeddings": (k, POSE_EMBEDDING_DIM),
            "joints": (k, JOINT_COUNT, 3),
            "decoded": (k, JOINT_COUNT, 3),
        }
        for name, want in shapes.items():
            got = getattr(self, name).shape
            if got != want:
                raise ValueError(f"{name} has shape {got}, expected {want}")

    @property
    def frames(self) -> int:
        return self.translations.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "translations": self.translations,
            "orientations": self.orientations,
            "pose_embeddings": self.pose_embeddings,
            "joints": self.joints,
            "decoded": self.decoded,
            "global_salience": self.global_salience,
            "local_salience": self.local_salience,
        }
