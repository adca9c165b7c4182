from .types import (
    JOINT_COUNT,
    POSE_EMBEDDING_DIM,
    GazeSequence,
    HorizonConfig,
    JointSet,
    MotionSequence,
    PoseState,
    ScenePointCloud,
    pad_virtual_sequence,
    sequence_from_arrays,
)

__all__ = [
    "JOINT_COUNT",
    "POSE_EMBEDDING_DIM",
    "GazeSequence",
    "HorizonConfig",
    "JointSet",
    "MotionSequence",
    "PoseState",
    "ScenePointCloud",
    "pad_virtual_sequence",
    "sequence_from_arrays",
]
