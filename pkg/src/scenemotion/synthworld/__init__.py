from .scenes import (Box, GoalSpec, SceneSpec, benchmark_scene_specs,
                     generate_scene, ray_surface_intersection, scene_faces,
                     surface_distance)
from .episodes import (EpisodeRecord, UnreachableGoalError, episode_clearance,
                       generate_episode)
from .dataset import (CorruptDatasetError, Dataset, build_dataset,
                      generate_dataset, read_dataset, write_dataset)

__all__ = [
    "Box",
    "GoalSpec",
    "SceneSpec",
    "generate_scene",
    "benchmark_scene_specs",
    "ray_surface_intersection",
    "scene_faces",
    "surface_distance",
    "EpisodeRecord",
    "UnreachableGoalError",
    "episode_clearance",
    "generate_episode",
    "CorruptDatasetError",
    "Dataset",
    "build_dataset",
    "generate_dataset",
    "read_dataset",
    "write_dataset",
]
