"""Shared fixtures: small worlds, tensorized episode batches, rngs."""
from __future__ import annotations

import numpy as np
import pytest
import torch

from scenemotion.core.types import HorizonConfig
from scenemotion.model import ForecastInputs, MotionForecaster, tiny_config
from scenemotion.motion_encoder import MOTION_INPUT_DIM
from scenemotion.scene_encoder import (SceneStructureBatch,
                                       build_scene_structure)
from scenemotion.synthworld.dataset import build_dataset
from scenemotion.synthworld.scenes import (Box, GoalSpec, SceneSpec,
                                           generate_scene)


@pytest.fixture(scope="session", autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def demo_spec() -> SceneSpec:
    return SceneSpec(
        obstacles=(Box(center=(-1.0, 0.5, 0.5), size=(0.8, 0.8, 1.0)),),
        goals=(GoalSpec("goal_0", Box(center=(2.6, 2.4, 0.4),
                                      size=(0.5, 0.5, 0.8))),
               GoalSpec("goal_1", Box(center=(-2.6, -2.6, 0.4),
                                      size=(0.5, 0.5, 0.8)))),
        target_points=512)


@pytest.fixture(scope="session")
def demo_cloud(demo_spec):
    cloud, _ = generate_scene(demo_spec, 404)
    return cloud


@pytest.fixture(scope="session")
def small_dataset():
    return build_dataset(scenes=2, episodes_per_scene=6, seed=9,
                         target_points=512)


@pytest.fixture(scope="session")
def tiny_dataset():
    """Dataset matching the tiny preset's shortened horizon."""
    return build_dataset(scenes=2, episodes_per_scene=6, seed=9,
                         horizon=HorizonConfig(observed_frames=2,
                                               future_frames=2),
                         target_points=512)


def random_inputs(config, n_points: int = 32, batch: int = 2,
                  seed: int = 0, dtype=torch.float32
                  ) -> tuple[ForecastInputs, SceneStructureBatch]:
    """Random forecast inputs compatible with a model config."""
    rng = np.random.default_rng(seed)
    horizon = config.horizon
    structures = [
        build_scene_structure(
            rng.uniform(-2, 2, size=(n_points, 3)), config.scene_spec)
        for _ in range(batch)
    ]
    scene = SceneStructureBatch(structures, dtype=dtype)
    total = horizon.total_frames
    feats = torch.as_tensor(
        rng.normal(size=(batch, total, MOTION_INPUT_DIM)), dtype=dtype)
    gaze_idx = torch.as_tensor(
        rng.integers(0, n_points, size=(batch, horizon.observed_frames)),
        dtype=torch.long)
    inputs = ForecastInputs(scene=scene,
                            scene_index=torch.arange(batch),
                            motion_features=feats,
                            gaze_index=gaze_idx)
    return inputs, scene


@pytest.fixture()
def tiny_model() -> MotionForecaster:
    torch.manual_seed(7)
    return MotionForecaster(tiny_config())


@pytest.fixture()
def tiny_inputs(tiny_model):
    inputs, _ = random_inputs(tiny_model.config, n_points=32, batch=2, seed=3)
    return inputs
