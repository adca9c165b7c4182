"""Full forecasting model: encoders, attention streams, heads, adversary.

Every variant studied by the ablation harness shares one module layout;
modality and component toggles reroute the forward pass instead of
changing the parameter set, so all variants of a given size start from
identical initial weights under the same seed.

Toggle semantics:
  - ``use_scene=False`` zeroes the per-point and global scene features at
    the attention inputs and the discriminator memory, and skips the
    local scene attention outright (its spatial bias reads raw scene
    coordinates, which a scene-blind variant must not see). Gaze features
    keep reading the real per-point features, so the gaze-only variant
    still knows what the subject looked at.
  - ``use_gaze=False`` zeroes the gaze embedding.
  - ``use_tia``/``use_sca`` off route the motion embedding straight to the
    corresponding head; ``use_decoder`` off returns reconstructed joints
    undecoded.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
import torch
from torch import nn

from .adversary import Discriminator
from .core.body import BodyTensors
from .core.rotations import matrix_to_quat
from .core.types import HorizonConfig
from .heads import (MotionDecoder, PosePredictor, PredictionBundle,
                    TrajectoryPlanner, reconstruct_joints)
from .motion_encoder import GazeEncoder, MotionEncoder, build_gaze_track
from .sca import ScaStack, relative_normalize_torch
from .scene_encoder import (PointwiseSceneEncoder, SceneEncoder,
                            SceneEncoderSpec, SceneStructureBatch,
                            default_scene_spec, small_scene_spec,
                            tiny_scene_spec)
from .tia import AGGREGATOR_CHOICES, TiaStack

SCENE_ENCODER_CHOICES = ("hierarchical", "pointwise")


@dataclass(frozen=True)
class ModelConfig:
    motion_dim: int = 256
    scene_dim: int = 256
    heads: int = 8
    motion_layers: int = 6
    ff_dim: int = 1024
    mlp_hidden: int = 1024
    tia_blocks: int = 2
    sca_blocks: int = 2
    aggregator: str = "last"
    decoder_width: int = 64
    decoder_layers: int = 6
    disc_dim: int = 256
    disc_layers: int = 3
    scene_spec: SceneEncoderSpec = field(default_factory=default_scene_spec)
    horizon: HorizonConfig = field(default_factory=HorizonConfig)
    use_scene: bool = True
    use_gaze: bool = True
    use_tia: bool = True
    use_sca: bool = True
    use_decoder: bool = True
    use_discriminator: bool = True
    scene_encoder: str = "hierarchical"

    def __post_init__(self):
        if self.aggregator not in AGGREGATOR_CHOICES:
            raise ValueError(f"unknown aggregator {self.aggregator!r}")
        if self.scene_encoder not in SCENE_ENCODER_CHOICES:
            raise ValueError(f"unknown scene encoder {self.scene_encoder!r}")
        if self.scene_spec.out_dim != self.scene_dim:
            raise ValueError(
                f"scene_spec.out_dim {self.scene_spec.out_dim} != "
                f"scene_dim {self.scene_dim}")


def default_config(**overrides) -> ModelConfig:
    return replace(ModelConfig(), **overrides)


def small_config(**overrides) -> ModelConfig:
    base = ModelConfig(
        motion_dim=32, scene_dim=32, heads=4, motion_layers=2,
        ff_dim=64, mlp_hidden=48, decoder_width=16, decoder_layers=4,
        disc_dim=32, disc_layers=2, scene_spec=small_scene_spec(32))
    return replace(base, **overrides)


def tiny_config(**overrides) -> ModelConfig:
    base = ModelConfig(
        motion_dim=16, scene_dim=16, heads=2, motion_layers=1,
        ff_dim=32, mlp_hidden=32, tia_blocks=1, sca_blocks=1,
        decoder_width=8, decoder_layers=2, disc_dim=16, disc_layers=1,
        scene_spec=tiny_scene_spec(16),
        horizon=HorizonConfig(observed_frames=2, future_frames=2))
    return replace(base, **overrides)


MODEL_PRESETS = {
    "default": default_config,
    "small": small_config,
    "tiny": tiny_config,
}


class ForecastInputs(NamedTuple):
    """One collated batch of episodes over a shared scene set."""

    scene: SceneStructureBatch
    scene_index: torch.Tensor      # [B] into the scene set
    motion_features: torch.Tensor  # [B, T+dT, 41] padded virtual sequence
    gaze_index: torch.Tensor       # [B, T] snapped scene-point indices


class ModelOutput(NamedTuple):
    translations: torch.Tensor          # [B, K, 3]
    rotations: torch.Tensor             # [B, K, 3, 3]
    pose_embeddings: torch.Tensor       # [B, K, 32]
    joints: torch.Tensor                # [B, K, 23, 3]
    decoded: torch.Tensor               # [B, K, 23, 3]
    scene_global: torch.Tensor          # [B, c_s], zeroed when scene off
    global_salience: list[torch.Tensor]
    local_salience: list[torch.Tensor]
    spatial_bias: list[torch.Tensor]


class MotionForecaster(nn.Module):
    """Scene- and gaze-conditioned motion forecaster with its adversary."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c = config
        self.scene_enc = SceneEncoder(c.scene_spec)
        self.pointwise_enc = PointwiseSceneEncoder(c.scene_dim)
        self.motion_encoder = MotionEncoder(
            c.motion_dim, c.motion_layers, c.heads, c.ff_dim)
        self.gaze_encoder = GazeEncoder(
            c.scene_dim, c.motion_dim, c.heads, c.ff_dim)
        self.tia = TiaStack(c.tia_blocks, c.motion_dim, c.scene_dim,
                            c.heads, c.ff_dim, c.mlp_hidden, c.aggregator)
        self.sca = ScaStack(c.sca_blocks, c.motion_dim, c.scene_dim,
                            c.heads, c.ff_dim, c.mlp_hidden)
        self.trajectory_planner = TrajectoryPlanner(c.motion_dim)
        self.pose_predictor = PosePredictor(c.motion_dim)
        self.motion_decoder = MotionDecoder(c.decoder_width, c.decoder_layers)
        self.discriminator = Discriminator(
            c.scene_dim, c.disc_dim, c.heads, c.ff_dim, c.disc_layers)
        self.body = BodyTensors()

    def generator_parameters(self):
        for name, param in self.named_parameters():
            if not name.startswith("discriminator."):
                yield param

    def discriminator_parameters(self):
        return self.discriminator.parameters()

    @property
    def dtype(self) -> torch.dtype:
        return next(self.parameters()).dtype

    def encode_scene(self, scene: SceneStructureBatch):
        encoder = (self.scene_enc
                   if self.config.scene_encoder == "hierarchical"
                   else self.pointwise_enc)
        return encoder(scene.to(self.dtype))

    def forward(self, inputs: ForecastInputs) -> ModelOutput:
        cfg = self.config
        dtype = self.dtype
        scene = inputs.scene.to(dtype)
        encoded = self.encode_scene(scene)
        point_feats = encoded.point_features[inputs.scene_index]
        global_feat = encoded.global_feature[inputs.scene_index]
        world_points = scene.points[inputs.scene_index]

        f_m = self.motion_encoder(inputs.motion_features.to(dtype))
        horizon = f_m.shape[1]
        if cfg.use_gaze:
            track = build_gaze_track(point_feats, inputs.gaze_index, horizon)
            f_gaze = self.gaze_encoder(track)
        else:
            f_gaze = torch.zeros_like(f_m)

        if cfg.use_scene:
            attn_points, attn_global = point_feats, global_feat
        else:
            attn_points = torch.zeros_like(point_feats)
            attn_global = torch.zeros_like(global_feat)

        if cfg.use_tia:
            f_tia, global_sal = self.tia(f_m, attn_points, attn_global, f_gaze)
        else:
            f_tia, global_sal = f_m, []
        translations, rotations = self.trajectory_planner(f_tia)

        if cfg.use_sca and cfg.use_scene:
            rel = relative_normalize_torch(world_points, translations,
                                           rotations)
            f_sca, local_sal, bias = self.sca(f_m, attn_points, rel)
        else:
            f_sca, local_sal, bias = f_m, [], []
        pose = self.pose_predictor(f_sca)

        joints = reconstruct_joints(translations, rotations, pose, self.body)
        decoded = self.motion_decoder(joints) if cfg.use_decoder else joints
        return ModelOutput(translations, rotations, pose, joints, decoded,
                           attn_global, global_sal, local_sal, bias)


def output_to_bundles(output: ModelOutput) -> list[PredictionBundle]:
    """Split a batched output into per-episode numpy bundles."""
    def grab(tensor: torch.Tensor) -> np.ndarray:
        return tensor.detach().cpu().numpy().astype(np.float64)

    bundles = []
    batch = output.translations.shape[0]
    for b in range(batch):
        rotations = grab(output.rotations[b])
        quats = np.stack([matrix_to_quat(r) for r in rotations])
        global_sal = (np.stack([grab(s[b]) for s in output.global_salience])
                      if output.global_salience else np.zeros((0, 0)))
        local_sal = (np.stack([grab(s[b]) for s in output.local_salience])
                     if output.local_salience else np.zeros((0, 0, 0)))
        bundles.append(PredictionBundle(
            translations=grab(output.translations[b]),
            orientations=quats,
            pose_embeddings=grab(output.pose_embeddings[b]),
            joints=grab(output.joints[b]),
            decoded=grab(output.decoded[b]),
            global_salience=global_sal,
            local_salience=local_sal))
    return bundles
