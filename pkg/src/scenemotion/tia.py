"""Intention-aware attention over the whole scene.

A condensed motion representation queries every scene point once,
producing a single salience distribution ("where is this person headed").
The salience-weighted scene features, the global scene embedding, and the
gaze features are fused into the motion stream through a two-layer MLP
with a residual connection. Blocks stack; gaze features are computed once
and reused by every block.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import torch
from torch import nn

from .motion_encoder import EncoderLayer, FeedForward, MultiheadAttention, zero_module

AGGREGATOR_CHOICES = ("last", "mean", "max", "conv", "transformer")


class TemporalAggregator(nn.Module):
    """Condenses a [B, T, c] sequence to one [B, c] representation.

    ``last``, ``mean`` and ``max`` are parameter-free. ``conv`` applies
    three stride-2 1D convolutions over time then averages. ``transformer``
    pools with a single-layer decoder whose one learned query attends over
    the sequence.
    """

    def __init__(self, strategy: str, dim: int, heads: int = 8):
        super().__init__()
        strategy = strategy.lower()
        if strategy not in AGGREGATOR_CHOICES:
            raise ValueError(
                f"unknown aggregator {strategy!r}, expected one of "
                f"{AGGREGATOR_CHOICES}")
        self.strategy = strategy
        if strategy == "conv":
            self.convs = nn.ModuleList(
                nn.Conv1d(dim, dim, kernel_size=3, stride=2, padding=1)
                for _ in range(3))
        elif strategy == "transformer":
            self.query = nn.Parameter(torch.zeros(1, 1, dim))
            self.norm1 = nn.LayerNorm(dim)
            self.attn = MultiheadAttention(dim, heads)
            self.norm2 = nn.LayerNorm(dim)
            self.ff = FeedForward(dim, 4 * dim)

    def forward(self, seq: torch.Tensor) -> torch.Tensor:
        if seq.shape[1] == 0:
            raise ValueError("cannot aggregate an empty sequence")
        if self.strategy == "last":
            return seq[:, -1]
        if self.strategy == "mean":
            return seq.mean(dim=1)
        if self.strategy == "max":
            return seq.amax(dim=1)
        if self.strategy == "conv":
            h = seq.transpose(1, 2)
            for conv in self.convs:
                h = torch.relu(conv(h))
            return h.mean(dim=2)
        q = self.query.expand(seq.shape[0], -1, -1)
        q = q + self.attn(self.norm1(q), memory=seq)
        q = q + self.ff(self.norm2(q))
        return q[:, 0]


def aggregate_temporal(seq: torch.Tensor, strategy: str,
                       params: TemporalAggregator | None = None) -> torch.Tensor:
    """Functional entry point; parametric strategies require ``params``."""
    strategy = strategy.lower()
    if params is not None:
        if params.strategy != strategy:
            raise ValueError(
                f"aggregator built for {params.strategy!r}, asked {strategy!r}")
        module = params
    else:
        if strategy in ("conv", "transformer"):
            raise ValueError(f"strategy {strategy!r} needs a parametric module")
        module = TemporalAggregator(strategy, seq.shape[-1])
    batched = seq if seq.dim() == 3 else seq[None]
    out = module(batched)
    return out if seq.dim() == 3 else out[0]


class GlobalSalienceAttention(nn.Module):
    """One query from the condensed motion, softmax over all scene points."""

    def __init__(self, motion_dim: int, scene_dim: int, attn_dim: int):
        super().__init__()
        self.attn_dim = attn_dim
        self.q_proj = nn.Linear(motion_dim, attn_dim)
        self.k_proj = nn.Linear(scene_dim, attn_dim)
        self.v_proj = nn.Linear(scene_dim, motion_dim)

    def forward(self, condensed: torch.Tensor, point_features: torch.Tensor
                ) -> tuple[torch.Tensor, torch.Tensor]:
        """[B, c_m], [B, n, c_s] -> salience [B, n], values [B, n, c_m]."""
        if point_features.shape[1] == 0:
            raise ValueError("scene has no points to attend over")
        q = self.q_proj(condensed)
        k = self.k_proj(point_features)
        logits = torch.einsum("bc,bnc->bn", q, k) / math.sqrt(self.attn_dim)
        return torch.softmax(logits, dim=-1), self.v_proj(point_features)


def fuse_global(global_embedding: torch.Tensor, salience: torch.Tensor,
                values: torch.Tensor, horizon: int,
                projection: nn.Module) -> torch.Tensor:
    """Broadcast projected global + salience-weighted values to all frames.

    [B, c_s], [B, n], [B, n, c_m] -> [B, horizon, c_m]; every output row
    is the same fused scene summary.
    """
    pooled = torch.einsum("bn,bnc->bc", salience, values)
    row = projection(global_embedding) + pooled
    return row[:, None, :].expand(-1, horizon, -1)


class TiaBlock(nn.Module):
    """One fusion block: encode, condense, attend, fuse, mix.

    The output MLP is zero-initialized, so a fresh block is the identity
    on its motion input.
    """

    def __init__(self, dim: int, scene_dim: int, heads: int = 8,
                 ff_dim: int = 1024, mlp_hidden: int = 1024,
                 aggregator: str = "last"):
        super().__init__()
        self.trajectory_encoder = EncoderLayer(dim, heads, ff_dim)
        self.aggregator = TemporalAggregator(aggregator, dim, heads)
        self.salience = GlobalSalienceAttention(dim, scene_dim, dim)
        self.global_proj = nn.Linear(scene_dim, dim)
        self.mlp = nn.Sequential(
            nn.Linear(3 * dim, mlp_hidden), nn.ReLU(),
            zero_module(nn.Linear(mlp_hidden, dim)))

    def forward(self, f_in: torch.Tensor, point_features: torch.Tensor,
                global_feature: torch.Tensor, f_gaze: torch.Tensor
                ) -> tuple[torch.Tensor, torch.Tensor]:
        if f_in.shape != f_gaze.shape:
            raise ValueError(
                f"motion {tuple(f_in.shape)} and gaze {tuple(f_gaze.shape)} "
                "embeddings must match")
        encoded = self.trajectory_encoder(f_in)
        condensed = self.aggregator(encoded)
        weights, values = self.salience(condensed, point_features)
        fused = fuse_global(global_feature, weights, values, f_in.shape[1],
                            self.global_proj)
        out = f_in + self.mlp(torch.cat([f_in, fused, f_gaze], dim=-1))
        return out, weights


class TiaOutput(NamedTuple):
    values: torch.Tensor             # [B, T+dT, c_m]
    salience: list[torch.Tensor]     # per block, [B, n]


class TiaStack(nn.Module):
    """Chain of fusion blocks sharing one gaze embedding."""

    def __init__(self, blocks: int, dim: int, scene_dim: int, heads: int = 8,
                 ff_dim: int = 1024, mlp_hidden: int = 1024,
                 aggregator: str = "last"):
        super().__init__()
        self.blocks = nn.ModuleList(
            TiaBlock(dim, scene_dim, heads, ff_dim, mlp_hidden, aggregator)
            for _ in range(blocks))

    def forward(self, f_in: torch.Tensor, point_features: torch.Tensor,
                global_feature: torch.Tensor,
                f_gaze: torch.Tensor) -> TiaOutput:
        salience = []
        h = f_in
        for block in self.blocks:
            h, weights = block(h, point_features, global_feature, f_gaze)
            salience.append(weights)
        return TiaOutput(h, salience)
