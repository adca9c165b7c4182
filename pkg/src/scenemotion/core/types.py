"""Domain types shared across the forecasting pipeline.

All geometry is in meters. Orientations are unit quaternions (w, x, y, z)
with a canonical nonnegative scalar part. Instances are immutable values;
the wrapped arrays are marked read-only so they can be shared freely
across threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

POSE_EMBEDDING_DIM = 32
JOINT_COUNT = 23

QUAT_NORM_TOL = 1e-6


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PoseState:
    """One frame of motion: global translation, orientation, pose embedding."""

    translation: np.ndarray     # [3] meters
    orientation: np.ndarray     # [4] unit quaternion (w, x, y, z), w >= 0
    pose_embedding: np.ndarray  # [32]

    def __post_init__(self):
        t = _frozen(self.translation)
        q = np.array(self.orientation, dtype=np.float64)
        p = _frozen(self.pose_embedding)
        if t.shape != (3,):
            raise ValueError(f"translation must have shape (3,), got {t.shape}")
        if q.shape != (4,):
            raise ValueError(f"orientation must have shape (4,), got {q.shape}")
        if p.shape != (POSE_EMBEDDING_DIM,):
            raise ValueError(
                f"pose_embedding must have shape ({POSE_EMBEDDING_DIM},), got {p.shape}"
            )
        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > QUAT_NORM_TOL:
            raise ValueError(f"orientation quaternion norm {norm} is not within "
                             f"{QUAT_NORM_TOL} of 1")
        q = q / norm
        if q[0] < 0.0:
            q = -q
        q.setflags(write=False)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "orientation", q)
        object.__setattr__(self, "pose_embedding", p)


@dataclass(frozen=True)
class MotionSequence:
    """An ordered sequence of poses sampled at a fixed frame rate."""

    frames: tuple[PoseState, ...]
    frame_rate: float  # Hz

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("MotionSequence must contain at least one frame")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, k: int) -> PoseState:
        return self.frames[k]

    @property
    def translations(self) -> np.ndarray:
        """[T, 3] stacked translations."""
        return np.stack([f.translation for f in self.frames])

    @property
    def orientations(self) -> np.ndarray:
        """[T, 4] stacked quaternions."""
        return np.stack([f.orientation for f in self.frames])

    @property
    def pose_embeddings(self) -> np.ndarray:
        """[T, 32] stacked embeddings."""
        return np.stack([f.pose_embedding for f in self.frames])


@dataclass(frozen=True)
class ScenePointCloud:
    """A static scene represented as an n x 3 point set."""

    points: np.ndarray  # [n, 3] meters

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (n, 3), got {pts.shape}")
        if pts.shape[0] < 1:
            raise ValueError("point cloud must contain at least one point")
        if not np.isfinite(pts).all():
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class GazeSequence:
    """Gaze points, one 3D scene-surface intersection per observed frame."""

    points: np.ndarray  # [T, 3] meters

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"gaze points must have shape (T, 3), got {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("gaze contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class JointSet:
    """Body joint positions for one frame."""

    joints: np.ndarray  # [23, 3] meters

    def __post_init__(self):
        j = _frozen(self.joints)
        if j.shape != (JOINT_COUNT, 3):
            raise ValueError(f"joints must have shape ({JOINT_COUNT}, 3), got {j.shape}")
        if not np.isfinite(j).all():
            raise ValueError("joints contain non-finite coordinates")
        object.__setattr__(self, "joints", j)


@dataclass(frozen=True)
class HorizonConfig:
    """Observed / future frame counts at a given frame rate.

    Defaults to the 3 s observed + 5 s future split at 2 Hz.
    """

    observed_frames: int = 6
    future_frames: int = 10
    frame_rate: float = 2.0

    def __post_init__(self):
        if self.observed_frames < 1:
            raise ValueError("observed_frames must be >= 1")
        if self.future_frames < 1:
            raise ValueError("future_frames must be >= 1")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")

    @property
    def total_frames(self) -> int:
        return self.observed_frames + self.future_frames


def pad_virtual_sequence(observed: MotionSequence, future_frames: int) -> MotionSequence:
    """Extend a sequence by repeating its last frame ``future_frames`` times.

    The result has length T + future_frames; the first T frames are the
    input, the tail is identical copies of frame T.
    """
    if future_frames < 0:
        raise ValueError("future_frames must be >= 0")
    if len(observed) == 0:
        raise ValueError("observed sequence must be nonempty")
    tail = (observed.frames[-1],) * future_frames
    return MotionSequence(frames=observed.frames + tail, frame_rate=observed.frame_rate)


def sequence_from_arrays(translations: np.ndarray,
                         orientations: np.ndarray,
                         pose_embeddings: np.ndarray,
                         frame_rate: float) -> MotionSequence:
    """Build a MotionSequence from stacked [T, ...] arrays."""
    frames = tuple(
        PoseState(translation=t, orientation=q, pose_embedding=p)
        for t, q, p in zip(translations, orientations, pose_embeddings)
    )
    return MotionSequence(frames=frames, frame_rate=frame_rate)
