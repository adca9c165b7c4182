"""Training loop: optimization schedule, checkpointing, determinism.

The generator (everything but the discriminator) and the discriminator
each get one AdamW step per batch, with decoupled weight decay 0.01 and
gradient-norm clipping at 1.0. The learning rate decays exponentially
per epoch. All randomness (init, batch order) derives from the config
seed, and the loop runs single-threaded by default so repeated runs are
bit-identical.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np
import torch

from .adversary import adversarial_losses, generator_loss
from .core.body import BodyTensors, default_body_model
from .core.rotations import quat_to_matrix_torch
from .core.types import HorizonConfig, pad_virtual_sequence
from .heads import PredictionBundle
from .losses import (LossReport, LossWeights, NonFiniteLossError, Targets,
                     make_report, reconstruction_losses, total_generator_loss)
from .metrics import MetricReport, evaluate_episodes
from .model import (MODEL_PRESETS, ForecastInputs, ModelConfig,
                    MotionForecaster, output_to_bundles)
from .motion_encoder import gaze_track_indices, motion_input_features
from .scene_encoder import SceneStructureBatch, build_scene_structure
from .synthworld.dataset import Dataset
from .synthworld.episodes import EpisodeRecord

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Flat, serializable description of one training run."""

    learning_rate: float = 4e-4
    decay: float = 0.98
    epochs: int = 100
    batch_size: int = 8
    weight_traj: float = 1.0
    weight_orient: float = 0.5
    weight_pose: float = 0.1
    weight_joints: float = 1.0
    weight_adv: float = 0.05
    seed: int = 0
    checkpoint_every: int = 25
    num_threads: int = 1
    model_preset: str = "default"
    aggregator: str = "last"
    scene_encoder: str = "hierarchical"
    use_scene: bool = True
    use_gaze: bool = True
    use_tia: bool = True
    use_sca: bool = True
    use_decoder: bool = True
    use_discriminator: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must be in (0, 1]")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")
        if self.num_threads < 1:
            raise ValueError("num_threads must be >= 1")
        if self.model_preset not in MODEL_PRESETS:
            raise ValueError(f"unknown model preset {self.model_preset!r}")
        for name in ("weight_traj", "weight_orient", "weight_pose",
                     "weight_joints", "weight_adv"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(traj=self.weight_traj, orient=self.weight_orient,
                           pose=self.weight_pose, joints=self.weight_joints,
                           adv=self.weight_adv)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        data = json.loads(text)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def model_config_for(config: TrainConfig) -> ModelConfig:
    return MODEL_PRESETS[config.model_preset](
        aggregator=config.aggregator,
        scene_encoder=config.scene_encoder,
        use_scene=config.use_scene,
        use_gaze=config.use_gaze,
        use_tia=config.use_tia,
        use_sca=config.use_sca,
        use_decoder=config.use_decoder,
        use_discriminator=config.use_discriminator,
    )


def build_model(config: TrainConfig) -> MotionForecaster:
    """Construct the model with seed-determined initialization.

    Module construction order is fixed and toggles never change which
    modules exist, so every variant sharing a seed starts from identical
    weights.
    """
    torch.manual_seed(config.seed)
    return MotionForecaster(model_config_for(config))


class PreparedDataset(NamedTuple):
    """Episodes pre-tensorized against one shared scene set."""

    scene_batch: SceneStructureBatch
    scene_ids: list[str]
    scene_index: torch.Tensor       # [N]
    motion_features: torch.Tensor   # [N, K, 41]
    gaze_index: torch.Tensor        # [N, T]
    targets: Targets                # [N, ...] full horizon
    episode_ids: list[str]
    records: list[EpisodeRecord]
    splits: list[str]
    horizon: HorizonConfig

    def indices_for(self, split: str) -> list[int]:
        if split not in ("train", "eval"):
            raise ValueError(f"unknown split {split!r}")
        return [i for i, s in enumerate(self.splits) if s == split]

    def batch(self, indices: Iterable[int]
              ) -> tuple[ForecastInputs, Targets]:
        idx = torch.as_tensor(list(indices), dtype=torch.long)
        inputs = ForecastInputs(
            scene=self.scene_batch,
            scene_index=self.scene_index[idx],
            motion_features=self.motion_features[idx],
            gaze_index=self.gaze_index[idx])
        targets = Targets(
            translations=self.targets.translations[idx],
            rotations=self.targets.rotations[idx],
            pose_embeddings=self.targets.pose_embeddings[idx],
            joints=self.targets.joints[idx])
        return inputs, targets


def prepare_dataset(dataset: Dataset, model_config: ModelConfig,
                    dtype: torch.dtype = torch.float32) -> PreparedDataset:
    """Precompute every per-episode tensor the training loop needs."""
    horizon = dataset.horizon
    if horizon != model_config.horizon:
        raise ValueError(
            f"dataset horizon {horizon} != model horizon "
            f"{model_config.horizon}")
    scene_ids = dataset.scene_ids
    structures = [
        build_scene_structure(dataset.scenes[sid].cloud,
                              model_config.scene_spec)
        for sid in scene_ids
    ]
    scene_batch = SceneStructureBatch(structures, dtype=dtype)
    scene_pos = {sid: i for i, sid in enumerate(scene_ids)}
    body = BodyTensors(default_body_model(), dtype=dtype)

    scene_index, feats, gaze_idx = [], [], []
    trans, rots, poses = [], [], []
    episode_ids, records, splits = [], [], []
    for entry in dataset.episodes:
        record = entry.record
        if len(record.observed.frames) != horizon.observed_frames:
            raise ValueError(
                f"episode {entry.episode_id} observed length "
                f"{len(record.observed.frames)} != {horizon.observed_frames}")
        if len(record.future.frames) != horizon.future_frames:
            raise ValueError(
                f"episode {entry.episode_id} future length "
                f"{len(record.future.frames)} != {horizon.future_frames}")
        padded = pad_virtual_sequence(record.observed, horizon.future_frames)
        feats.append(torch.as_tensor(motion_input_features(padded),
                                     dtype=dtype))
        cloud = dataset.scenes[record.scene_id].cloud
        gaze_idx.append(torch.as_tensor(
            gaze_track_indices(record.gaze, cloud), dtype=torch.long))
        scene_index.append(scene_pos[record.scene_id])
        trans.append(torch.as_tensor(record.full_translations, dtype=dtype))
        rots.append(quat_to_matrix_torch(
            torch.as_tensor(record.full_orientations, dtype=dtype)))
        poses.append(torch.as_tensor(record.full_pose_embeddings,
                                     dtype=dtype))
        episode_ids.append(entry.episode_id)
        records.append(record)
        splits.append(entry.split)

    translations = torch.stack(trans)
    rotations = torch.stack(rots)
    pose_embeddings = torch.stack(poses)
    joints = body.joints(translations, rotations, pose_embeddings)
    return PreparedDataset(
        scene_batch=scene_batch,
        scene_ids=scene_ids,
        scene_index=torch.as_tensor(scene_index, dtype=torch.long),
        motion_features=torch.stack(feats),
        gaze_index=torch.stack(gaze_idx),
        targets=Targets(translations, rotations, pose_embeddings, joints),
        episode_ids=episode_ids,
        records=records,
        splits=splits,
        horizon=horizon)


def _check_finite_params(model: torch.nn.Module) -> None:
    for name, param in model.named_parameters():
        if not torch.isfinite(param).all():
            raise NonFiniteLossError({f"param:{name}": float("nan")})


def train_step(model: MotionForecaster, inputs: ForecastInputs,
               targets: Targets, opt_g: torch.optim.Optimizer,
               opt_d: torch.optim.Optimizer | None,
               weights: LossWeights, horizon: HorizonConfig) -> LossReport:
    """One generator update then one discriminator update.

    The fake sequence splices the true observed joints with the decoded
    future so the adversary judges only the predicted segment. A
    non-finite loss aborts the step before any parameter update.
    """
    model.train()
    adversarial = (model.config.use_discriminator and opt_d is not None
                   and weights.adv > 0)
    obs = horizon.observed_frames

    opt_g.zero_grad(set_to_none=True)
    output = model(inputs)
    terms = reconstruction_losses(output, targets, horizon)
    g_loss = None
    fake = None
    if adversarial:
        fake = torch.cat([targets.joints[:, :obs], output.decoded[:, obs:]],
                         dim=1)
        fake_scores = model.discriminator(fake, output.scene_global)
        g_loss = generator_loss(fake_scores)
    total = total_generator_loss(terms, g_loss, weights)
    values = {k: float(v.detach()) for k, v in terms.items()}
    values["total"] = float(total.detach())
    if g_loss is not None:
        values["l_adv_g"] = float(g_loss.detach())
    if not all(np.isfinite(v) for v in values.values()):
        raise NonFiniteLossError(values)
    total.backward()
    torch.nn.utils.clip_grad_norm_(
        [p for p in model.generator_parameters() if p.grad is not None], 1.0)
    opt_g.step()

    d_loss = None
    if adversarial:
        opt_d.zero_grad(set_to_none=True)
        memory = output.scene_global.detach()
        real_scores = model.discriminator(targets.joints, memory)
        fake_scores = model.discriminator(fake.detach(), memory)
        d_loss, _ = adversarial_losses(real_scores, fake_scores)
        if not torch.isfinite(d_loss):
            raise NonFiniteLossError({"l_adv_d": float(d_loss)})
        d_loss.backward()
        torch.nn.utils.clip_grad_norm_(
            [p for p in model.discriminator_parameters()
             if p.grad is not None], 1.0)
        opt_d.step()

    _check_finite_params(model)
    return make_report(terms, g_loss, d_loss, total)


def _mean_report(reports: list[LossReport]) -> LossReport:
    if not reports:
        raise ValueError("no loss reports to average")
    return LossReport(*(float(np.mean([getattr(r, f) for r in reports]))
                        for f in LossReport._fields))


def save_checkpoint(path: Path, model: MotionForecaster,
                    opt_g: torch.optim.Optimizer,
                    opt_d: torch.optim.Optimizer,
                    config: TrainConfig, epoch: int) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": dataclasses.asdict(config),
        "seed": config.seed,
        "epoch": epoch,
        "model": model.state_dict(),
        "opt_g": opt_g.state_dict(),
        "opt_d": opt_d.state_dict(),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        torch.save(payload, path)
    except OSError as exc:
        raise RuntimeError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path: Path) -> dict:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except OSError as exc:
        raise RuntimeError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("version") != CHECKPOINT_VERSION:
        raise RuntimeError(
            f"unsupported checkpoint version {payload.get('version')!r}")
    return payload


def restore_model(path: Path) -> tuple[MotionForecaster, TrainConfig, int]:
    payload = load_checkpoint(Path(path))
    config = TrainConfig(**payload["config"])
    model = build_model(config)
    model.load_state_dict(payload["model"])
    return model, config, payload["epoch"]


class TrainResult(NamedTuple):
    model: MotionForecaster
    history: list[LossReport]     # one averaged report per epoch
    checkpoints: list[Path]


def _make_optimizers(model: MotionForecaster, config: TrainConfig
                     ) -> tuple[torch.optim.Optimizer, torch.optim.Optimizer]:
    opt_g = torch.optim.AdamW(list(model.generator_parameters()),
                              lr=config.learning_rate, weight_decay=0.01)
    opt_d = torch.optim.AdamW(list(model.discriminator_parameters()),
                              lr=config.learning_rate, weight_decay=0.01)
    return opt_g, opt_d


def run_training(config: TrainConfig, dataset: Dataset,
                 out_dir: str | Path | None = None,
                 resume_from: str | Path | None = None,
                 prepared: PreparedDataset | None = None) -> TrainResult:
    """Full epoch loop over the train split.

    Batch order at epoch e is a permutation drawn from (seed, e), so a
    resumed run replays the identical remaining schedule. Checkpoints are
    written at epoch 0, every ``checkpoint_every`` epochs, and at the end.
    """
    torch.set_num_threads(config.num_threads)
    model_config = model_config_for(config)
    if prepared is None:
        prepared = prepare_dataset(dataset, model_config)
    train_idx = prepared.indices_for("train")
    if not train_idx:
        raise ValueError("dataset has no training episodes")

    start_epoch = 0
    if resume_from is not None:
        payload = load_checkpoint(Path(resume_from))
        if payload["config"] != dataclasses.asdict(config):
            raise ValueError("checkpoint config does not match TrainConfig")
        model = build_model(config)
        model.load_state_dict(payload["model"])
        opt_g, opt_d = _make_optimizers(model, config)
        opt_g.load_state_dict(payload["opt_g"])
        opt_d.load_state_dict(payload["opt_d"])
        start_epoch = payload["epoch"]
    else:
        model = build_model(config)
        opt_g, opt_d = _make_optimizers(model, config)

    out = Path(out_dir) if out_dir is not None else None
    checkpoints: list[Path] = []

    def checkpoint(epoch: int, name: str | None = None) -> None:
        if out is None:
            return
        fname = name or f"checkpoint_{epoch:04d}.pt"
        path = out / fname
        save_checkpoint(path, model, opt_g, opt_d, config, epoch)
        checkpoints.append(path)

    if start_epoch == 0:
        checkpoint(0)
    history: list[LossReport] = []
    weights = config.loss_weights
    for epoch in range(start_epoch, config.epochs):
        lr = config.learning_rate * config.decay ** epoch
        for group in opt_g.param_groups:
            group["lr"] = lr
        for group in opt_d.param_groups:
            group["lr"] = lr
        order = np.random.default_rng(
            np.random.SeedSequence([config.seed, epoch])).permutation(
                len(train_idx))
        reports = []
        for lo in range(0, len(order), config.batch_size):
            batch_ids = [train_idx[i] for i in order[lo:lo + config.batch_size]]
            inputs, targets = prepared.batch(batch_ids)
            reports.append(train_step(model, inputs, targets, opt_g, opt_d,
                                      weights, prepared.horizon))
        history.append(_mean_report(reports))
        done = epoch + 1
        if done % config.checkpoint_every == 0 and done < config.epochs:
            checkpoint(done)
    if config.epochs > 0:
        checkpoint(config.epochs, "checkpoint_final.pt")
    return TrainResult(model=model, history=history, checkpoints=checkpoints)


def predict_bundles(model: MotionForecaster, prepared: PreparedDataset,
                    indices: list[int], batch_size: int = 8
                    ) -> list[PredictionBundle]:
    model.eval()
    bundles: list[PredictionBundle] = []
    with torch.no_grad():
        for lo in range(0, len(indices), batch_size):
            inputs, _ = prepared.batch(indices[lo:lo + batch_size])
            bundles.extend(output_to_bundles(model(inputs)))
    return bundles


def evaluate(model: MotionForecaster, prepared: PreparedDataset,
             split: str = "eval", batch_size: int = 8) -> MetricReport:
    indices = prepared.indices_for(split)
    if not indices:
        raise ValueError(f"no episodes in split {split!r}")
    bundles = predict_bundles(model, prepared, indices, batch_size)
    return evaluate_episodes(
        bundles, [prepared.records[i] for i in indices],
        [prepared.episode_ids[i] for i in indices])
