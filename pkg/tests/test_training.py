"""Training loop: determinism, schedule, checkpoints, resume."""
from __future__ import annotations

import dataclasses

import numpy as np
import pytest
import torch

from scenemotion.losses import NonFiniteLossError
from scenemotion.metrics import MetricReport
from scenemotion.training import (TrainConfig, build_model, evaluate,
                                  load_checkpoint, model_config_for,
                                  predict_bundles, prepare_dataset,
                                  restore_model, run_training, save_checkpoint,
                                  train_step)

TINY = dict(model_preset="tiny", epochs=2, batch_size=4, checkpoint_every=1)


@pytest.fixture(scope="module")
def prepared(tiny_dataset):
    config = model_config_for(TrainConfig(**TINY))
    return prepare_dataset(tiny_dataset, config)


def _state_bytes(model) -> bytes:
    import io
    buf = io.BytesIO()
    torch.save(model.state_dict(), buf)
    return buf.getvalue()


def test_config_validation_and_json():
    cfg = TrainConfig(**TINY)
    again = TrainConfig.from_json(cfg.to_json())
    assert again == cfg
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(checkpoint_every=0)
    with pytest.raises(ValueError):
        TrainConfig(model_preset="huge")
    with pytest.raises(ValueError):
        TrainConfig.from_json('{"model_preset": "tiny", "bogus": 1}')


def test_model_config_mapping():
    cfg = TrainConfig(model_preset="tiny", aggregator="mean",
                      use_scene=False, use_decoder=False,
                      scene_encoder="pointwise")
    mc = model_config_for(cfg)
    assert mc.aggregator == "mean"
    assert mc.use_scene is False
    assert mc.use_decoder is False
    assert mc.scene_encoder == "pointwise"
    assert mc.motion_dim == 16


def test_prepare_dataset_layout(tiny_dataset, prepared):
    n = len(tiny_dataset.episodes)
    horizon = model_config_for(TrainConfig(**TINY)).horizon
    assert prepared.motion_features.shape == (
        n, horizon.total_frames, 41)
    assert prepared.gaze_index.shape == (n, horizon.observed_frames)
    assert prepared.gaze_index.max() < 512
    assert prepared.targets.translations.shape[:2] == (
        n, horizon.total_frames)
    assert len(prepared.records) == n
    train, eval_ = prepared.indices_for("train"), prepared.indices_for("eval")
    assert sorted(train + eval_) == list(range(n))


def test_prepare_rejects_horizon_mismatch(tiny_dataset):
    # the tiny dataset records 4-frame episodes; a full-length horizon
    # in the model config must be rejected
    from scenemotion.core.types import HorizonConfig
    import dataclasses as dc
    cfg = dc.replace(model_config_for(TrainConfig(**TINY)),
                     horizon=HorizonConfig())
    with pytest.raises(ValueError):
        prepare_dataset(tiny_dataset, cfg)


def test_zero_epochs_keeps_parameter_bytes(tiny_dataset, prepared):
    # without optimizer steps the loop must not touch the weights at all
    cfg = TrainConfig(**{**TINY, "epochs": 0})
    before = _state_bytes(build_model(cfg))
    result = run_training(cfg, tiny_dataset, prepared=prepared)
    assert _state_bytes(result.model) == before
    assert result.history == []


def test_training_reduces_loss(tiny_dataset, prepared):
    cfg = TrainConfig(**{**TINY, "epochs": 8})
    result = run_training(cfg, tiny_dataset, prepared=prepared)
    first, last = result.history[0], result.history[-1]
    assert last.total < first.total
    assert np.isfinite(last.total)


def test_training_deterministic(tiny_dataset, prepared):
    cfg = TrainConfig(**TINY)
    a = run_training(cfg, tiny_dataset, prepared=prepared)
    b = run_training(cfg, tiny_dataset, prepared=prepared)
    assert _state_bytes(a.model) == _state_bytes(b.model)
    assert a.history == b.history


def test_lr_schedule_decays(tiny_dataset, prepared, tmp_path):
    cfg = TrainConfig(**{**TINY, "epochs": 3})
    run_training(cfg, tiny_dataset, out_dir=tmp_path, prepared=prepared)
    payload = load_checkpoint(tmp_path / "checkpoint_final.pt")
    lr = payload["opt_g"]["param_groups"][0]["lr"]
    assert lr == pytest.approx(cfg.learning_rate * cfg.decay ** 2)


def test_checkpoint_files_written(tiny_dataset, prepared, tmp_path):
    cfg = TrainConfig(**{**TINY, "epochs": 4, "checkpoint_every": 2})
    result = run_training(cfg, tiny_dataset, out_dir=tmp_path,
                          prepared=prepared)
    names = sorted(p.name for p in result.checkpoints)
    assert names == ["checkpoint_0000.pt", "checkpoint_0002.pt",
                     "checkpoint_final.pt"]
    cfg0 = TrainConfig(**{**TINY, "epochs": 0})
    out2 = tmp_path / "zero"
    result0 = run_training(cfg0, tiny_dataset, out_dir=out2,
                           prepared=prepared)
    assert [p.name for p in result0.checkpoints] == ["checkpoint_0000.pt"]
    assert result0.history == []


def test_resume_replays_schedule(tiny_dataset, prepared, tmp_path):
    cfg = TrainConfig(**{**TINY, "epochs": 4, "checkpoint_every": 2})
    full = run_training(cfg, tiny_dataset, out_dir=tmp_path / "full",
                        prepared=prepared)
    resumed = run_training(cfg, tiny_dataset,
                           resume_from=tmp_path / "full" / "checkpoint_0002.pt",
                           prepared=prepared)
    assert _state_bytes(full.model) == _state_bytes(resumed.model)


def test_resume_rejects_other_config(tiny_dataset, prepared, tmp_path):
    cfg = TrainConfig(**TINY)
    run_training(cfg, tiny_dataset, out_dir=tmp_path, prepared=prepared)
    other = dataclasses.replace(cfg, learning_rate=1e-3)
    with pytest.raises(ValueError):
        run_training(other, tiny_dataset,
                     resume_from=tmp_path / "checkpoint_final.pt",
                     prepared=prepared)


def test_restore_model_round_trip(tiny_dataset, prepared, tmp_path):
    cfg = TrainConfig(**TINY)
    result = run_training(cfg, tiny_dataset, out_dir=tmp_path,
                          prepared=prepared)
    model, config, epoch = restore_model(tmp_path / "checkpoint_final.pt")
    assert config == cfg
    assert epoch == cfg.epochs
    assert _state_bytes(model) == _state_bytes(result.model)


def test_checkpoint_version_guard(tiny_dataset, tmp_path):
    cfg = TrainConfig(**TINY)
    model = build_model(cfg)
    from scenemotion.training import _make_optimizers
    opt_g, opt_d = _make_optimizers(model, cfg)
    path = tmp_path / "c.pt"
    save_checkpoint(path, model, opt_g, opt_d, cfg, 0)
    payload = torch.load(path, weights_only=False)
    payload["version"] = 99
    torch.save(payload, path)
    with pytest.raises(RuntimeError):
        load_checkpoint(path)
    with pytest.raises(RuntimeError):
        load_checkpoint(tmp_path / "missing.pt")


def test_nonfinite_loss_raises(tiny_dataset, prepared):
    cfg = TrainConfig(**TINY)
    model = build_model(cfg)
    with torch.no_grad():
        model.trajectory_planner.head.weight.fill_(float("nan"))
    from scenemotion.training import _make_optimizers
    opt_g, opt_d = _make_optimizers(model, cfg)
    idx = prepared.indices_for("train")[:2]
    inputs, targets = prepared.batch(idx)
    with pytest.raises(NonFiniteLossError):
        train_step(model, inputs, targets, opt_g, opt_d, cfg.loss_weights,
                   prepared.horizon)


def test_no_discriminator_variant_trains(tiny_dataset, prepared):
    cfg = TrainConfig(**{**TINY, "epochs": 1, "use_discriminator": False,
                         "weight_adv": 0.0})
    result = run_training(cfg, tiny_dataset, prepared=prepared)
    assert result.history[0].l_adv_d == 0.0
    assert result.history[0].l_adv_g == 0.0


def test_evaluate_returns_report(tiny_dataset, prepared):
    cfg = TrainConfig(**{**TINY, "epochs": 0})
    result = run_training(cfg, tiny_dataset, prepared=prepared)
    report = evaluate(result.model, prepared)
    assert isinstance(report, MetricReport)
    assert len(report.episodes) == len(prepared.indices_for("eval"))
    bundles = predict_bundles(result.model, prepared,
                              prepared.indices_for("eval"))
    assert len(bundles) == len(report.episodes)
    with pytest.raises(ValueError):
        evaluate(result.model, prepared, split="test")
