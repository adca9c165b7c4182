"""Evaluation metrics: trajectory deviation and per-joint error in mm.

Path variants average over the predicted future frames; dest variants use
the final predicted frame only. Joint errors compare the decoded joint
positions against ground-truth joints derived from the body model.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core.body import BodyModel, default_body_model, joints_for_sequence
from .core.rotations import quat_to_matrix
from .core.types import MotionSequence
from .heads import PredictionBundle
from .synthworld.episodes import EpisodeRecord

MM_PER_M = 1000.0


def sequence_joints(seq: MotionSequence, body: BodyModel | None = None
                    ) -> np.ndarray:
    """Ground-truth joints [T, 23, 3] for a motion sequence."""
    matrices = np.stack([quat_to_matrix(q) for q in seq.orientations])
    return joints_for_sequence(seq.translations, matrices,
                               seq.pose_embeddings, body)


@dataclass(frozen=True)
class EpisodeMetrics:
    episode_id: str
    traj_path: float
    traj_dest: float
    mpjpe_path: float
    mpjpe_dest: float

    def as_dict(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "traj_path_mm": self.traj_path,
            "traj_dest_mm": self.traj_dest,
            "mpjpe_path_mm": self.mpjpe_path,
            "mpjpe_dest_mm": self.mpjpe_dest,
        }


@dataclass(frozen=True)
class MetricReport:
    """Mean metrics over episodes with the per-episode breakdown attached."""

    episodes: tuple[EpisodeMetrics, ...]

    def __post_init__(self) -> None:
        if not self.episodes:
            raise ValueError("metric report needs at least one episode")

    def _mean(self, attr: str) -> float:
        return float(np.mean([getattr(e, attr) for e in self.episodes]))

    @property
    def traj_path(self) -> float:
        return self._mean("traj_path")

    @property
    def traj_dest(self) -> float:
        return self._mean("traj_dest")

    @property
    def mpjpe_path(self) -> float:
        return self._mean("mpjpe_path")

    @property
    def mpjpe_dest(self) -> float:
        return self._mean("mpjpe_dest")

    def as_dict(self) -> dict:
        return {
            "traj_path_mm": self.traj_path,
            "traj_dest_mm": self.traj_dest,
            "mpjpe_path_mm": self.mpjpe_path,
            "mpjpe_dest_mm": self.mpjpe_dest,
            "episodes": [e.as_dict() for e in self.episodes],
        }


def merge_reports(reports: list[MetricReport]) -> MetricReport:
    episodes: list[EpisodeMetrics] = []
    for report in reports:
        episodes.extend(report.episodes)
    return MetricReport(episodes=tuple(episodes))


def compute_metrics(pred: PredictionBundle, truth: EpisodeRecord,
                    body: BodyModel | None = None,
                    episode_id: str = "episode") -> MetricReport:
    """Score one episode. Horizon mismatch raises ValueError."""
    observed = len(truth.observed.frames)
    future = len(truth.future.frames)
    if pred.frames != observed + future:
        raise ValueError(
            f"prediction covers {pred.frames} frames but episode has "
            f"{observed} observed + {future} future")
    body = body or default_body_model()
    pred_t = pred.translations[observed:]
    true_t = truth.future.translations
    traj_err = np.linalg.norm(pred_t - true_t, axis=-1) * MM_PER_M
    pred_j = pred.decoded[observed:]
    true_j = sequence_joints(truth.future, body)
    joint_err = np.linalg.norm(pred_j - true_j, axis=-1) * MM_PER_M
    entry = EpisodeMetrics(
        episode_id=episode_id,
        traj_path=float(traj_err.mean()),
        traj_dest=float(traj_err[-1]),
        mpjpe_path=float(joint_err.mean()),
        mpjpe_dest=float(joint_err[-1].mean()),
    )
    return MetricReport(episodes=(entry,))


def evaluate_episodes(preds: list[PredictionBundle],
                      truths: list[EpisodeRecord],
                      episode_ids: list[str] | None = None,
                      body: BodyModel | None = None) -> MetricReport:
    if len(preds) != len(truths):
        raise ValueError("prediction and truth counts differ")
    if episode_ids is not None and len(episode_ids) != len(preds):
        raise ValueError("episode id count differs from predictions")
    body = body or default_body_model()
    reports = []
    for i, (pred, truth) in enumerate(zip(preds, truths)):
        name = episode_ids[i] if episode_ids is not None else f"episode_{i:04d}"
        reports.append(compute_metrics(pred, truth, body=body, episode_id=name))
    return merge_reports(reports)
