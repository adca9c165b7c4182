"""Scene-aware human motion forecasting: encoders, attention, training, evaluation."""

from .core.types import (GazeSequence, HorizonConfig, JointSet, MotionSequence,
                         PoseState, ScenePointCloud)
from .heads import PredictionBundle
from .losses import LossReport, LossWeights, compute_losses
from .metrics import MetricReport, compute_metrics
from .model import (ForecastInputs, ModelConfig, ModelOutput, MotionForecaster,
                    default_config, small_config, tiny_config)
from .training import TrainConfig, build_model, prepare_dataset, run_training

__version__ = "0.1.0"

__all__ = [
    "ForecastInputs",
    "GazeSequence",
    "HorizonConfig",
    "JointSet",
    "LossReport",
    "LossWeights",
    "MetricReport",
    "ModelConfig",
    "ModelOutput",
    "MotionForecaster",
    "MotionSequence",
    "PoseState",
    "PredictionBundle",
    "ScenePointCloud",
    "TrainConfig",
    "build_model",
    "compute_losses",
    "compute_metrics",
    "default_config",
    "prepare_dataset",
    "run_training",
    "small_config",
    "tiny_config",
    "__version__",
]
