"""Hierarchical scene point-cloud encoder.

A set-abstraction pyramid downsamples the cloud with deterministic farthest
point sampling and radius grouping, then feature propagation interpolates
features back to full resolution. Sampling, grouping and interpolation use
tie-broken orderings (distance, then lexicographic coordinates, then index)
so the encoding does not depend on the order points arrive in. Geometry
depends only on the scene, never on model parameters, so it is precomputed
once per scene and reused for every training step.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import torch
from torch import nn

from .core.types import ScenePointCloud

_NN_EPS = 1e-8


def _lex_first(points: np.ndarray, candidates: np.ndarray) -> int:
    """Candidate index with lexicographically smallest coordinates."""
    if candidates.size == 1:
        return int(candidates[0])
    sub = points[candidates]
    order = np.lexsort((sub[:, 2], sub[:, 1], sub[:, 0]))
    return int(candidates[order[0]])


def _ordered_by_distance(points: np.ndarray, d2: np.ndarray,
                         subset: np.ndarray) -> np.ndarray:
    """Subset sorted by squared distance, ties by coordinates then index."""
    sub = points[subset]
    order = np.lexsort((sub[:, 2], sub[:, 1], sub[:, 0], d2[subset]))
    return subset[order]


def farthest_point_sample(points: np.ndarray, count: int) -> np.ndarray:
    """Deterministic farthest point sampling.

    Starts from the point farthest from the centroid and greedily adds
    whichever point maximizes the distance to the selected set. Ties break
    by lexicographic coordinate order, then lowest index, so any
    permutation of the input selects the same coordinates in the same
    order.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if count < 1 or count > n:
        raise ValueError(f"cannot sample {count} centers from {n} points")
    centroid = points.mean(axis=0)
    d2 = np.sum((points - centroid) ** 2, axis=1)
    out = np.empty(count, dtype=np.int64)
    pick = _lex_first(points, np.flatnonzero(d2 == d2.max()))
    out[0] = pick
    best = np.sum((points - points[pick]) ** 2, axis=1)
    for i in range(1, count):
        pick = _lex_first(points, np.flatnonzero(best == best.max()))
        out[i] = pick
        np.minimum(best, np.sum((points - points[pick]) ** 2, axis=1), out=best)
    return out


def ball_query(points: np.ndarray, centers: np.ndarray, radius: float,
               group_size: int) -> np.ndarray:
    """Group up to ``group_size`` points within ``radius`` of each center.

    Members are ordered by distance with coordinate tie-breaks. Short
    groups repeat their nearest member; a center with nothing in radius
    falls back to the single globally nearest point.
    """
    points = np.asarray(points, dtype=np.float64)
    r2 = radius * radius
    out = np.empty((centers.shape[0], group_size), dtype=np.int64)
    for row, center in enumerate(centers):
        d2 = np.sum((points - center) ** 2, axis=1)
        inside = np.flatnonzero(d2 <= r2)
        if inside.size == 0:
            inside = np.flatnonzero(d2 == d2.min())[:1]
        ordered = _ordered_by_distance(points, d2, inside)[:group_size]
        out[row, :ordered.size] = ordered
        out[row, ordered.size:] = ordered[0]
    return out


def three_nn(query: np.ndarray, source: np.ndarray
             ) -> tuple[np.ndarray, np.ndarray]:
    """Three nearest source points per query with inverse-distance weights.

    Sources with fewer than three points repeat the nearest one; weights
    always sum to one, so interpolating from a single source point reduces
    to a broadcast.
    """
    take = min(3, source.shape[0])
    idx = np.empty((query.shape[0], 3), dtype=np.int64)
    weight = np.empty((query.shape[0], 3))
    for row, q in enumerate(query):
        d2 = np.sum((source - q) ** 2, axis=1)
        ordered = _ordered_by_distance(source, d2, np.arange(source.shape[0]))
        idx[row, :take] = ordered[:take]
        idx[row, take:] = ordered[0]
        w = 1.0 / (d2[idx[row]] + _NN_EPS)
        weight[row] = w / w.sum()
    return idx, weight


def nearest_point_index(points: np.ndarray, query: np.ndarray) -> int:
    """Index of the scene point nearest to ``query``, tie-broken."""
    points = np.asarray(points, dtype=np.float64)
    d2 = np.sum((points - np.asarray(query, dtype=np.float64)) ** 2, axis=1)
    return _lex_first(points, np.flatnonzero(d2 == d2.min()))


@dataclass(frozen=True)
class BallLevelSpec:
    centers: int
    radius: float
    group_size: int
    mlp: tuple[int, ...]


@dataclass(frozen=True)
class SceneEncoderSpec:
    """Widths and grouping parameters of the set-abstraction pyramid."""

    ball_levels: tuple[BallLevelSpec, ...]
    global_mlp: tuple[int, ...]
    fp_mlp: tuple[int, ...]
    out_dim: int


def default_scene_spec(out_dim: int = 256) -> SceneEncoderSpec:
    return SceneEncoderSpec(
        ball_levels=(
            BallLevelSpec(512, 0.2, 32, (64, 64, 128)),
            BallLevelSpec(128, 0.4, 64, (128, 128, 256)),
        ),
        global_mlp=(256, 256, 256),
        fp_mlp=(256, 256),
        out_dim=out_dim,
    )


def small_scene_spec(out_dim: int = 32) -> SceneEncoderSpec:
    """Reduced pyramid for small synthetic clouds and fast experiments."""
    return SceneEncoderSpec(
        ball_levels=(
            BallLevelSpec(128, 0.4, 16, (16, 16, 32)),
            BallLevelSpec(32, 0.8, 16, (32, 32, 64)),
        ),
        global_mlp=(64, 64, 64),
        fp_mlp=(64, 64),
        out_dim=out_dim,
    )


def tiny_scene_spec(out_dim: int = 16) -> SceneEncoderSpec:
    """Minimal pyramid for gradient checks and shape tests."""
    return SceneEncoderSpec(
        ball_levels=(
            BallLevelSpec(8, 0.8, 4, (8, 8)),
            BallLevelSpec(4, 1.6, 4, (8, 16)),
        ),
        global_mlp=(16, 16),
        fp_mlp=(16, 16),
        out_dim=out_dim,
    )


@dataclass
class SceneStructure:
    """Precomputed sampling geometry for one scene.

    ``group_idx[l]`` indexes the previous level's points, ``fp_idx`` runs
    coarsest to finest and carries the interpolation tables used by
    feature propagation. All coordinates are stored in the centroid
    frame, so features built from them ignore where the room sits in
    world space.
    """

    points: np.ndarray
    centroid: np.ndarray
    centered: np.ndarray
    center_xyz: list[np.ndarray]
    group_idx: list[np.ndarray]
    group_rel: list[np.ndarray]
    fp_idx: list[np.ndarray]
    fp_weight: list[np.ndarray]


def build_scene_structure(cloud: ScenePointCloud | np.ndarray,
                          spec: SceneEncoderSpec) -> SceneStructure:
    pts = cloud.points if isinstance(cloud, ScenePointCloud) else np.asarray(cloud)
    pts = pts.astype(np.float64)
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    level_xyz = [centered]
    center_xyz: list[np.ndarray] = []
    group_idx: list[np.ndarray] = []
    group_rel: list[np.ndarray] = []
    for level in spec.ball_levels:
        prev = level_xyz[-1]
        idx = farthest_point_sample(prev, level.centers)
        centers = prev[idx]
        gidx = ball_query(prev, centers, level.radius, level.group_size)
        center_xyz.append(centers)
        group_idx.append(gidx)
        group_rel.append(prev[gidx] - centers[:, None, :])
        level_xyz.append(centers)
    fp_idx: list[np.ndarray] = []
    fp_weight: list[np.ndarray] = []
    for i in range(len(level_xyz) - 1, 0, -1):
        idx, w = three_nn(level_xyz[i - 1], level_xyz[i])
        fp_idx.append(idx)
        fp_weight.append(w)
    return SceneStructure(points=pts, centroid=centroid, centered=centered,
                          center_xyz=center_xyz, group_idx=group_idx,
                          group_rel=group_rel, fp_idx=fp_idx,
                          fp_weight=fp_weight)


class SceneStructureBatch:
    """Stacked per-scene geometry as torch tensors, reused every step."""

    def __init__(self, structures: Sequence[SceneStructure],
                 dtype: torch.dtype = torch.float32):
        def stack(arrays: list[np.ndarray]) -> torch.Tensor:
            return torch.as_tensor(np.stack(arrays), dtype=dtype)

        def stack_idx(arrays: list[np.ndarray]) -> torch.Tensor:
            return torch.as_tensor(np.stack(arrays), dtype=torch.long)

        n_levels = len(structures[0].group_idx)
        n_fp = len(structures[0].fp_idx)
        self.size = len(structures)
        self.dtype = dtype
        self.points = stack([s.points for s in structures])
        self.centered = stack([s.centered for s in structures])
        self.group_idx = [stack_idx([s.group_idx[l] for s in structures])
                          for l in range(n_levels)]
        self.group_rel = [stack([s.group_rel[l] for s in structures])
                          for l in range(n_levels)]
        self.global_rel = stack([s.center_xyz[-1] for s in structures])
        self.fp_idx = [stack_idx([s.fp_idx[l] for s in structures])
                       for l in range(n_fp)]
        self.fp_weight = [stack([s.fp_weight[l] for s in structures])
                          for l in range(n_fp)]

    def to(self, dtype: torch.dtype) -> "SceneStructureBatch":
        if dtype == self.dtype:
            return self
        out = object.__new__(SceneStructureBatch)
        out.size = self.size
        out.dtype = dtype
        out.points = self.points.to(dtype)
        out.centered = self.centered.to(dtype)
        out.group_idx = self.group_idx
        out.group_rel = [t.to(dtype) for t in self.group_rel]
        out.global_rel = self.global_rel.to(dtype)
        out.fp_idx = self.fp_idx
        out.fp_weight = [t.to(dtype) for t in self.fp_weight]
        return out


class SceneEncoding(NamedTuple):
    point_features: torch.Tensor  # [B, n, c]
    global_feature: torch.Tensor  # [B, c]


def _mlp(in_dim: int, widths: Sequence[int]) -> nn.Sequential:
    layers: list[nn.Module] = []
    prev = in_dim
    for width in widths:
        layers += [nn.Linear(prev, width), nn.ReLU()]
        prev = width
    return nn.Sequential(*layers)


def _gather_groups(h: torch.Tensor, group_idx: torch.Tensor) -> torch.Tensor:
    """[B, m_prev, C] gathered by [B, m, k] -> [B, m, k, C]."""
    batch = torch.arange(h.shape[0], device=h.device)[:, None, None]
    return h[batch, group_idx]


def _interpolate(h: torch.Tensor, idx: torch.Tensor,
                 weight: torch.Tensor) -> torch.Tensor:
    """Inverse-distance blend of three coarse features per fine point."""
    batch = torch.arange(h.shape[0], device=h.device)[:, None, None]
    gathered = h[batch, idx]  # [B, m_fine, 3, C]
    return (gathered * weight[..., None]).sum(dim=2)


class SceneEncoder(nn.Module):
    """Set-abstraction pyramid with feature propagation to full resolution.

    Produces one feature per scene point plus a pooled global feature.
    Group pooling uses max, which keeps the output exactly independent of
    member order.
    """

    def __init__(self, spec: SceneEncoderSpec):
        super().__init__()
        self.spec = spec
        self.ball_mlps = nn.ModuleList()
        prev = 3  # initial per-point feature: centroid-frame position
        skip_dims = [prev]
        for level in spec.ball_levels:
            self.ball_mlps.append(_mlp(3 + prev, level.mlp))
            prev = level.mlp[-1]
            skip_dims.append(prev)
        self.global_mlp = _mlp(3 + prev, spec.global_mlp)
        g_dim = spec.global_mlp[-1]
        self.fp_mlps = nn.ModuleList([_mlp(g_dim + skip_dims[-1], spec.fp_mlp)])
        carry = spec.fp_mlp[-1]
        for skip in skip_dims[-2::-1]:
            self.fp_mlps.append(_mlp(carry + skip, spec.fp_mlp))
            carry = spec.fp_mlp[-1]
        self.point_proj = nn.Linear(carry, spec.out_dim)
        self.global_proj = nn.Linear(g_dim, spec.out_dim)

    def forward(self, batch: SceneStructureBatch) -> SceneEncoding:
        h = batch.centered
        skips = [h]
        for mlp, gidx, grel in zip(self.ball_mlps, batch.group_idx,
                                   batch.group_rel):
            members = _gather_groups(h, gidx)
            h = mlp(torch.cat([grel, members], dim=-1)).amax(dim=2)
            skips.append(h)
        g = self.global_mlp(
            torch.cat([batch.global_rel, h], dim=-1)).amax(dim=1)
        u = self.fp_mlps[0](torch.cat(
            [g[:, None, :].expand(-1, h.shape[1], -1), skips[-1]], dim=-1))
        for mlp, idx, w, skip in zip(self.fp_mlps[1:], batch.fp_idx,
                                     batch.fp_weight, skips[-2::-1]):
            u = mlp(torch.cat([_interpolate(u, idx, w), skip], dim=-1))
        return SceneEncoding(self.point_proj(u), self.global_proj(g))


class PointwiseSceneEncoder(nn.Module):
    """Flat per-point MLP with max pooling, the non-hierarchical baseline."""

    def __init__(self, out_dim: int, hidden: int = 128):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(3, hidden), nn.ReLU(),
            nn.Linear(hidden, hidden), nn.ReLU(),
        )
        self.point_proj = nn.Linear(hidden, out_dim)
        self.global_proj = nn.Linear(hidden, out_dim)

    def forward(self, batch: SceneStructureBatch) -> SceneEncoding:
        h = self.mlp(batch.centered)
        return SceneEncoding(self.point_proj(h),
                             self.global_proj(h.amax(dim=1)))
