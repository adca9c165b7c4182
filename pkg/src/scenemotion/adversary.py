"""Scene-conditioned sequence discriminator and least-squares GAN losses."""
from __future__ import annotations

import torch
from torch import nn

from .core.types import JOINT_COUNT
from .motion_encoder import (EncoderLayer, FeedForward, MultiheadAttention,
                             positional_encoding)


class DecoderLayer(nn.Module):
    """Pre-norm block: self-attention, cross-attention to memory, MLP."""

    def __init__(self, dim: int, heads: int, ff_dim: int,
                 memory_dim: int | None = None):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.self_attn = MultiheadAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.cross_attn = MultiheadAttention(dim, heads, memory_dim)
        self.norm3 = nn.LayerNorm(dim)
        self.ff = FeedForward(dim, ff_dim)

    def forward(self, x: torch.Tensor, memory: torch.Tensor) -> torch.Tensor:
        x = x + self.self_attn(self.norm1(x))
        x = x + self.cross_attn(self.norm2(x), memory)
        return x + self.ff(self.norm3(x))


class Discriminator(nn.Module):
    """Scores how plausible a joint sequence looks within its scene.

    Frames are flattened to 69 values, lifted, tagged with positions and
    passed through decoder layers that cross-attend to the scene's global
    embedding, a single memory token. The mean-pooled sequence maps to one
    unbounded logit.
    """

    def __init__(self, scene_dim: int, dim: int = 256, heads: int = 8,
                 ff_dim: int = 1024, layers: int = 3):
        super().__init__()
        self.dim = dim
        self.lift = nn.Linear(JOINT_COUNT * 3, dim)
        self.scene_proj = nn.Linear(scene_dim, dim)
        self.layers = nn.ModuleList(
            DecoderLayer(dim, heads, ff_dim) for _ in range(layers))
        self.final_norm = nn.LayerNorm(dim)
        self.head = nn.Linear(dim, 1)

    def forward(self, joints_seq: torch.Tensor,
                scene_global: torch.Tensor) -> torch.Tensor:
        """[B, K, 23, 3], [B, c_s] -> scores [B]."""
        if joints_seq.shape[-2:] != (JOINT_COUNT, 3):
            raise ValueError(
                f"expected [..., {JOINT_COUNT}, 3] joints, got "
                f"{tuple(joints_seq.shape)}")
        x = self.lift(joints_seq.flatten(-2))
        x = x + positional_encoding(x.shape[1], self.dim, x.dtype)
        memory = self.scene_proj(scene_global)[:, None, :]
        for layer in self.layers:
            x = layer(x, memory)
        return self.head(self.final_norm(x).mean(dim=1)).squeeze(-1)


def adversarial_losses(real_score: torch.Tensor, fake_score: torch.Tensor
                       ) -> tuple[torch.Tensor, torch.Tensor]:
    """Least-squares GAN objectives, averaged over the batch.

    d = (E[(real-1)^2] + E[fake^2]) / 2, g = E[(fake-1)^2] / 2.
    """
    d_loss = 0.5 * (((real_score - 1.0) ** 2).mean() + (fake_score ** 2).mean())
    return d_loss, generator_loss(fake_score)


def generator_loss(fake_score: torch.Tensor) -> torch.Tensor:
    """Least-squares generator objective, E[(fake-1)^2] / 2."""
    return 0.5 * ((fake_score - 1.0) ** 2).mean()
