"""Simplified deterministic body model.

Joints are produced from a pose tuple by a fixed linear skeleton:

    joints = translation + R(orientation) @ (rest + blend @ pose_embedding)

where ``rest`` is a canonical 23-joint humanoid and ``blend`` is a fixed
23x3x32 linear map from the pose embedding to joint offsets. Both live in
a versioned JSON sidecar committed to the repo; the file carries the seed
used to draw the blend tensor so it can be regenerated and verified.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np
import torch

from .rotations import quat_to_matrix
from .types import JOINT_COUNT, POSE_EMBEDDING_DIM, JointSet, PoseState

SKELETON_FILE = "skeleton_v1.json"
SKELETON_VERSION = 1
SKELETON_SEED = 20240501
BLEND_SCALE = 0.03  # meters of joint offset per unit of embedding, per channel

JOINT_NAMES = [
    "pelvis", "spine1", "spine2", "spine3", "neck", "head", "head_top",
    "l_collar", "r_collar", "l_shoulder", "r_shoulder", "l_elbow", "r_elbow",
    "l_wrist", "r_wrist", "l_hand", "r_hand",
    "l_hip", "r_hip", "l_knee", "r_knee", "l_ankle", "r_ankle",
]

# parent index per joint, -1 for the pelvis root
JOINT_PARENTS = [
    -1, 0, 1, 2, 3, 4, 5,
    3, 3, 7, 8, 9, 10,
    11, 12, 13, 14,
    0, 0, 17, 18, 19, 20,
]

# canonical rest pose, meters relative to the pelvis; x forward, y left, z up
_REST_POSE = [
    [0.00, 0.00, 0.00],    # pelvis
    [0.00, 0.00, 0.12],    # spine1
    [0.00, 0.00, 0.26],    # spine2
    [0.00, 0.00, 0.40],    # spine3
    [0.00, 0.00, 0.52],    # neck
    [0.00, 0.00, 0.62],    # head
    [0.00, 0.00, 0.75],    # head_top
    [0.00, 0.08, 0.48],    # l_collar
    [0.00, -0.08, 0.48],   # r_collar
    [0.00, 0.20, 0.48],    # l_shoulder
    [0.00, -0.20, 0.48],   # r_shoulder
    [0.00, 0.46, 0.48],    # l_elbow
    [0.00, -0.46, 0.48],   # r_elbow
    [0.00, 0.70, 0.48],    # l_wrist
    [0.00, -0.70, 0.48],   # r_wrist
    [0.00, 0.78, 0.48],    # l_hand
    [0.00, -0.78, 0.48],   # r_hand
    [0.00, 0.10, -0.06],   # l_hip
    [0.00, -0.10, -0.06],  # r_hip
    [0.00, 0.10, -0.50],   # l_knee
    [0.00, -0.10, -0.50],  # r_knee
    [0.00, 0.10, -0.90],   # l_ankle
    [0.00, -0.10, -0.90],  # r_ankle
]


def generate_skeleton_data(seed: int = SKELETON_SEED) -> dict:
    """Build the skeleton sidecar payload from its generation seed."""
    rng = np.random.default_rng(seed)
    blend = rng.normal(0.0, BLEND_SCALE, size=(JOINT_COUNT, 3, POSE_EMBEDDING_DIM))
    return {
        "version": SKELETON_VERSION,
        "seed": seed,
        "joint_names": JOINT_NAMES,
        "parents": JOINT_PARENTS,
        "rest_pose": _REST_POSE,
        "blend": blend.tolist(),
    }


@dataclass(frozen=True)
class BodyModel:
    """Fixed linear skeleton: rest pose, blend tensor, kinematic tree."""

    rest_pose: np.ndarray  # [23, 3]
    blend: np.ndarray      # [23, 3, 32]
    parents: tuple[int, ...]
    seed: int
    version: int

    @property
    def joint_count(self) -> int:
        return self.rest_pose.shape[0]


@lru_cache(maxsize=1)
def default_body_model() -> BodyModel:
    """Load the committed skeleton sidecar."""
    path = resources.files("scenemotion.core") / "data" / SKELETON_FILE
    data = json.loads(path.read_text())
    return BodyModel(
        rest_pose=np.array(data["rest_pose"], dtype=np.float64),
        blend=np.array(data["blend"], dtype=np.float64),
        parents=tuple(data["parents"]),
        seed=int(data["seed"]),
        version=int(data["version"]),
    )


def body_joints(pose: PoseState, model: BodyModel | None = None) -> JointSet:
    """Joint positions for a single pose under the linear body model."""
    model = model or default_body_model()
    offsets = model.rest_pose + model.blend @ pose.pose_embedding  # [23, 3]
    R = quat_to_matrix(pose.orientation)
    return JointSet(joints=pose.translation + offsets @ R.T)


def joints_for_sequence(translations: np.ndarray,
                        orientation_matrices: np.ndarray,
                        pose_embeddings: np.ndarray,
                        model: BodyModel | None = None) -> np.ndarray:
    """Batched numpy joints: [T, 3], [T, 3, 3], [T, 32] -> [T, 23, 3]."""
    model = model or default_body_model()
    offsets = model.rest_pose[None] + np.einsum(
        "jdk,tk->tjd", model.blend, pose_embeddings)
    rotated = np.einsum("tde,tje->tjd", orientation_matrices, offsets)
    return translations[:, None, :] + rotated


class BodyTensors(torch.nn.Module):
    """Torch copies of the body model for the differentiable joint path.

    Registered as non-persistent buffers so they follow the owning
    module's dtype and device without entering checkpoints.
    """

    def __init__(self, model: BodyModel | None = None,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        model = model or default_body_model()
        self.parents = model.parents
        self.register_buffer(
            "rest_pose", torch.as_tensor(model.rest_pose, dtype=dtype),
            persistent=False)
        self.register_buffer(
            "blend", torch.as_tensor(model.blend, dtype=dtype),
            persistent=False)

    def joints(self, translation: torch.Tensor, rotation: torch.Tensor,
               pose_embedding: torch.Tensor) -> torch.Tensor:
        """[..., 3], [..., 3, 3], [..., 32] -> [..., 23, 3], differentiable."""
        offsets = self.rest_pose + torch.einsum(
            "jdk,...k->...jd", self.blend, pose_embedding)
        rotated = torch.einsum("...de,...je->...jd", rotation, offsets)
        return translation[..., None, :] + rotated

    forward = joints
