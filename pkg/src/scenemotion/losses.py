"""Supervised and adversarial loss assembly.

All reconstruction terms are computed over the future frames only; the
observed segment is input, not a target. The trajectory and joint errors
are plain Euclidean means, orientation is the geodesic angle, and the
pose embedding uses a squared norm. Term weights default to values that
put every term at a comparable magnitude on the synthetic data.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import torch

from .core.body import BodyTensors
from .core.rotations import geodesic_angle_torch, quat_to_matrix_torch
from .core.types import HorizonConfig
from .model import ModelOutput


@dataclass(frozen=True)
class LossWeights:
    traj: float = 1.0
    orient: float = 0.5
    pose: float = 0.1
    joints: float = 1.0
    adv: float = 0.05

    def __post_init__(self):
        for name in ("traj", "orient", "pose", "joints", "adv"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be >= 0")


class LossReport(NamedTuple):
    l_traj: float
    l_orient: float
    l_pose: float
    l_joints: float
    l_adv_g: float
    l_adv_d: float
    total: float


class Targets(NamedTuple):
    """Ground-truth tensors over the full horizon, [B, K, ...]."""

    translations: torch.Tensor       # [B, K, 3]
    rotations: torch.Tensor          # [B, K, 3, 3]
    pose_embeddings: torch.Tensor    # [B, K, 32]
    joints: torch.Tensor             # [B, K, 23, 3]


class NonFiniteLossError(RuntimeError):
    """A training step produced a non-finite loss; carries the term values."""

    def __init__(self, terms: dict[str, float]):
        self.terms = terms
        detail = ", ".join(f"{k}={v!r}" for k, v in terms.items())
        super().__init__(f"non-finite training loss: {detail}")


def reconstruction_losses(output: ModelOutput, targets: Targets,
                          horizon: HorizonConfig) -> dict[str, torch.Tensor]:
    """Future-frame supervision terms as differentiable scalars."""
    if output.translations.shape[1] != horizon.total_frames:
        raise ValueError(
            f"prediction horizon {output.translations.shape[1]} != "
            f"configured {horizon.total_frames}")
    if targets.translations.shape != output.translations.shape:
        raise ValueError("target horizon does not match prediction")
    fut = slice(horizon.observed_frames, horizon.total_frames)
    l_traj = torch.linalg.vector_norm(
        output.translations[:, fut] - targets.translations[:, fut],
        dim=-1).mean()
    l_orient = geodesic_angle_torch(
        output.rotations[:, fut], targets.rotations[:, fut]).mean()
    l_pose = ((output.pose_embeddings[:, fut] -
               targets.pose_embeddings[:, fut]) ** 2).sum(dim=-1).mean()
    l_joints = torch.linalg.vector_norm(
        output.decoded[:, fut] - targets.joints[:, fut], dim=-1).mean()
    return {"l_traj": l_traj, "l_orient": l_orient,
            "l_pose": l_pose, "l_joints": l_joints}


def total_generator_loss(terms: dict[str, torch.Tensor],
                         g_loss: torch.Tensor | None,
                         weights: LossWeights) -> torch.Tensor:
    total = (weights.traj * terms["l_traj"]
             + weights.orient * terms["l_orient"]
             + weights.pose * terms["l_pose"]
             + weights.joints * terms["l_joints"])
    if g_loss is not None:
        total = total + weights.adv * g_loss
    return total


def make_report(terms: dict[str, torch.Tensor],
                g_loss: torch.Tensor | None,
                d_loss: torch.Tensor | None,
                total: torch.Tensor) -> LossReport:
    return LossReport(
        l_traj=float(terms["l_traj"].detach()),
        l_orient=float(terms["l_orient"].detach()),
        l_pose=float(terms["l_pose"].detach()),
        l_joints=float(terms["l_joints"].detach()),
        l_adv_g=0.0 if g_loss is None else float(g_loss.detach()),
        l_adv_d=0.0 if d_loss is None else float(d_loss.detach()),
        total=float(total.detach()))


def compute_losses(pred, truth, scores: tuple | None = None,
                   weights: LossWeights | None = None) -> LossReport:
    """Loss report for one predicted episode against ground truth.

    ``pred`` is a PredictionBundle over the full horizon, ``truth`` an
    EpisodeRecord, ``scores`` an optional (real, fake) pair of
    discriminator outputs. Reconstruction terms cover the future frames
    only; the total applies the configured weights.
    """
    from .adversary import adversarial_losses
    from .core.body import default_body_model
    from .core.rotations import geodesic_angle

    weights = weights or LossWeights()
    observed = len(truth.observed.frames)
    future = len(truth.future.frames)
    if pred.frames != observed + future:
        raise ValueError(
            f"prediction covers {pred.frames} frames but episode has "
            f"{observed} observed + {future} future")
    fut = slice(observed, observed + future)
    l_traj = float(np.linalg.norm(
        pred.translations[fut] - truth.future.translations, axis=-1).mean())
    angles = [
        geodesic_angle(pred.orientations[k],
                       truth.future.orientations[k - observed])
        for k in range(observed, observed + future)
    ]
    l_orient = float(np.mean(angles))
    l_pose = float(((pred.pose_embeddings[fut] -
                     truth.future.pose_embeddings) ** 2).sum(axis=-1).mean())
    body = BodyTensors(default_body_model(), dtype=torch.float64)
    true_joints = episode_targets(
        truth.future.translations, truth.future.orientations,
        truth.future.pose_embeddings, body, dtype=torch.float64
    ).joints[0].numpy()
    l_joints = float(np.linalg.norm(
        pred.decoded[fut] - true_joints, axis=-1).mean())
    g_loss = d_loss = 0.0
    if scores is not None:
        real = torch.as_tensor(np.asarray(scores[0], dtype=np.float64))
        fake = torch.as_tensor(np.asarray(scores[1], dtype=np.float64))
        d_term, g_term = adversarial_losses(real, fake)
        g_loss, d_loss = float(g_term), float(d_term)
    total = (weights.traj * l_traj + weights.orient * l_orient
             + weights.pose * l_pose + weights.joints * l_joints
             + weights.adv * g_loss)
    return LossReport(l_traj=l_traj, l_orient=l_orient, l_pose=l_pose,
                      l_joints=l_joints, l_adv_g=g_loss, l_adv_d=d_loss,
                      total=total)


def episode_targets(translations: np.ndarray, orientations: np.ndarray,
                    pose_embeddings: np.ndarray, body: BodyTensors,
                    dtype: torch.dtype = torch.float32) -> Targets:
    """Full-horizon ground truth tensors for one episode, batch of one.

    ``orientations`` are quaternions [K, 4]; joints are derived from the
    body model, matching how predictions are reconstructed.
    """
    trans = torch.as_tensor(translations, dtype=dtype)[None]
    quats = torch.as_tensor(orientations, dtype=dtype)[None]
    rots = quat_to_matrix_torch(quats)
    pose = torch.as_tensor(pose_embeddings, dtype=dtype)[None]
    joints = body.joints(trans, rots, pose)
    return Targets(trans, rots, pose, joints)
