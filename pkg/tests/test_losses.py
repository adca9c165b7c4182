"""Loss terms against hand-computed oracles on real episodes."""
from __future__ import annotations

import numpy as np
import pytest
import torch

from scenemotion.core.body import BodyTensors, default_body_model, \
    joints_for_sequence
from scenemotion.core.rotations import (geodesic_angle, quat_to_matrix,
                                        matrix_to_quat)
from scenemotion.core.types import HorizonConfig
from scenemotion.heads import PredictionBundle
from scenemotion.losses import (LossWeights, NonFiniteLossError, Targets,
                                compute_losses, episode_targets,
                                reconstruction_losses, total_generator_loss)
from scenemotion.synthworld import generate_episode
from scenemotion.synthworld.scenes import benchmark_scene_specs


@pytest.fixture(scope="module")
def episode():
    spec = benchmark_scene_specs(1, seed=7, target_points=512)[0]
    return generate_episode(spec, 3, HorizonConfig())


def _perfect_bundle(record) -> PredictionBundle:
    trans = record.full_translations
    quats = record.full_orientations
    pose = record.full_pose_embeddings
    rots = np.stack([quat_to_matrix(q) for q in quats])
    joints = joints_for_sequence(trans, rots, pose, default_body_model())
    return PredictionBundle(translations=trans, orientations=quats,
                            pose_embeddings=pose, joints=joints,
                            decoded=joints)


def test_perfect_prediction_zero_losses(episode):
    report = compute_losses(_perfect_bundle(episode), episode)
    assert report.l_traj == pytest.approx(0.0, abs=1e-9)
    assert report.l_orient == pytest.approx(0.0, abs=1e-6)
    assert report.l_pose == pytest.approx(0.0, abs=1e-12)
    assert report.l_joints == pytest.approx(0.0, abs=1e-9)
    assert report.total == pytest.approx(0.0, abs=1e-6)


def test_translation_offset_moves_traj_and_joints(episode):
    bundle = _perfect_bundle(episode)
    bundle.translations[:] += np.array([0.01, 0.0, 0.0])
    bundle.decoded[:] += np.array([0.01, 0.0, 0.0])
    report = compute_losses(bundle, episode)
    assert report.l_traj == pytest.approx(0.01, abs=1e-12)
    assert report.l_joints == pytest.approx(0.01, abs=1e-9)
    assert report.l_orient == pytest.approx(0.0, abs=1e-6)


def test_weights_applied_to_total(episode):
    bundle = _perfect_bundle(episode)
    bundle.translations[:] += np.array([0.0, 0.02, 0.0])
    w = LossWeights(traj=2.0, orient=0.0, pose=0.0, joints=0.0, adv=0.0)
    report = compute_losses(bundle, episode, weights=w)
    assert report.total == pytest.approx(2.0 * 0.02, abs=1e-9)


def test_weights_reject_negative():
    with pytest.raises(ValueError):
        LossWeights(traj=-0.1)


def test_adversarial_scores_enter_report(episode):
    bundle = _perfect_bundle(episode)
    report = compute_losses(bundle, episode,
                            scores=(np.array([1.0]), np.array([0.0])))
    assert report.l_adv_d == pytest.approx(0.0)
    assert report.l_adv_g == pytest.approx(0.5)
    assert report.total == pytest.approx(0.05 * 0.5, abs=1e-6)


def test_frame_count_validated(episode):
    bundle = _perfect_bundle(episode)
    short = PredictionBundle(
        translations=bundle.translations[:-1],
        orientations=bundle.orientations[:-1],
        pose_embeddings=bundle.pose_embeddings[:-1],
        joints=bundle.joints[:-1], decoded=bundle.decoded[:-1])
    with pytest.raises(ValueError):
        compute_losses(short, episode)


def test_torch_terms_match_numpy_oracle(episode):
    # independent numpy recomputation of every reconstruction term
    horizon = HorizonConfig()
    body = BodyTensors(default_body_model(), dtype=torch.float64)
    truth = episode_targets(
        np.concatenate([episode.observed.translations,
                        episode.future.translations]),
        np.concatenate([episode.observed.orientations,
                        episode.future.orientations]),
        np.concatenate([episode.observed.pose_embeddings,
                        episode.future.pose_embeddings]),
        body, dtype=torch.float64)
    rng = np.random.default_rng(0)
    k = horizon.total_frames
    pred_trans = truth.translations[0].numpy() + rng.normal(0, 0.1, (k, 3))
    pred_rots = []
    for m in truth.rotations[0].numpy():
        jitter, _ = np.linalg.qr(np.eye(3) + rng.normal(0, 0.05, (3, 3)))
        if np.linalg.det(jitter) < 0:
            jitter[:, 0] *= -1
        pred_rots.append(jitter @ m)
    pred_rots = np.stack(pred_rots)
    pred_pose = truth.pose_embeddings[0].numpy() + rng.normal(0, 0.1, (k, 32))
    pred_joints = joints_for_sequence(pred_trans, pred_rots, pred_pose,
                                      default_body_model())

    class FakeOutput:
        translations = torch.as_tensor(pred_trans)[None]
        rotations = torch.as_tensor(pred_rots)[None]
        pose_embeddings = torch.as_tensor(pred_pose)[None]
        decoded = torch.as_tensor(pred_joints)[None]

    terms = reconstruction_losses(FakeOutput, truth, horizon)
    fut = slice(horizon.observed_frames, k)
    want_traj = np.linalg.norm(
        pred_trans[fut] - truth.translations[0].numpy()[fut], axis=-1).mean()
    assert terms["l_traj"].item() == pytest.approx(want_traj, rel=1e-9)
    angles = [geodesic_angle(matrix_to_quat(pred_rots[i]),
                             matrix_to_quat(truth.rotations[0].numpy()[i]))
              for i in range(horizon.observed_frames, k)]
    assert terms["l_orient"].item() == pytest.approx(np.mean(angles), rel=1e-6)
    want_pose = (((pred_pose - truth.pose_embeddings[0].numpy()) ** 2)
                 .sum(-1)[fut].mean())
    assert terms["l_pose"].item() == pytest.approx(want_pose, rel=1e-9)
    want_joints = np.linalg.norm(
        pred_joints[fut] - truth.joints[0].numpy()[fut], axis=-1).mean()
    assert terms["l_joints"].item() == pytest.approx(want_joints, rel=1e-9)

    total = total_generator_loss(terms, None, LossWeights())
    want_total = (want_traj + 0.5 * np.mean(angles) + 0.1 * want_pose
                  + want_joints)
    assert total.item() == pytest.approx(want_total, rel=1e-9)


def test_reconstruction_validates_horizon(episode):
    horizon = HorizonConfig()
    body = BodyTensors(default_body_model(), dtype=torch.float64)
    truth = episode_targets(
        episode.future.translations, episode.future.orientations,
        episode.future.pose_embeddings, body, dtype=torch.float64)

    class ShortOutput:
        translations = truth.translations
        rotations = truth.rotations
        pose_embeddings = truth.pose_embeddings
        decoded = truth.joints

    with pytest.raises(ValueError):
        reconstruction_losses(ShortOutput, truth, horizon)


def test_nonfinite_error_carries_terms():
    err = NonFiniteLossError({"l_traj": float("nan"), "l_pose": 1.0})
    assert "l_traj" in str(err)
    assert err.terms["l_pose"] == 1.0
