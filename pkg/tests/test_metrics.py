"""Metric reports against a brute-force per-element oracle."""
from __future__ import annotations

import math
import numpy as np
import pytest

from scenemotion.core.body import default_body_model, joints_for_sequence
from scenemotion.core.rotations import quat_to_matrix
from scenemotion.core.types import HorizonConfig
from scenemotion.heads import PredictionBundle
from scenemotion.metrics import (MetricReport, compute_metrics,
                                 evaluate_episodes, merge_reports,
                                 sequence_joints)
from scenemotion.synthworld import generate_episode
from scenemotion.synthworld.scenes import benchmark_scene_specs


@pytest.fixture(scope="module")
def episode():
    spec = benchmark_scene_specs(1, seed=7, target_points=512)[0]
    return generate_episode(spec, 21, HorizonConfig())


def _bundle_from_truth(record, rng=None) -> PredictionBundle:
    trans = record.full_translations.copy()
    quats = record.full_orientations.copy()
    pose = record.full_pose_embeddings.copy()
    if rng is not None:
        trans = trans + rng.normal(0, 0.2, trans.shape)
        pose = pose + rng.normal(0, 0.2, pose.shape)
    rots = np.stack([quat_to_matrix(q) for q in quats])
    joints = joints_for_sequence(trans, rots, pose, default_body_model())
    return PredictionBundle(translations=trans, orientations=quats,
                            pose_embeddings=pose, joints=joints,
                            decoded=joints)


def brute_force_metrics(pred: PredictionBundle, record) -> dict[str, float]:
    """Element-by-element python loops, no vectorized shortcuts."""
    obs = len(record.observed.frames)
    fut = len(record.future.frames)
    true_j = sequence_joints(record.future, default_body_model())
    traj_errs, joint_errs = [], []
    for k in range(fut):
        d = 0.0
        for axis in range(3):
            d += (pred.translations[obs + k][axis]
                  - record.future.translations[k][axis]) ** 2
        traj_errs.append(math.sqrt(d))
        per_joint = []
        for j in range(true_j.shape[1]):
            d = 0.0
            for axis in range(3):
                d += (pred.decoded[obs + k][j][axis]
                      - true_j[k][j][axis]) ** 2
            per_joint.append(math.sqrt(d))
        joint_errs.append(sum(per_joint) / len(per_joint))
    return {
        "traj_path_mm": 1000.0 * sum(traj_errs) / fut,
        "traj_dest_mm": 1000.0 * traj_errs[-1],
        "mpjpe_path_mm": 1000.0 * sum(joint_errs) / fut,
        "mpjpe_dest_mm": 1000.0 * joint_errs[-1],
    }


def test_identity_prediction_scores_zero(episode):
    m = compute_metrics(_bundle_from_truth(episode), episode)
    for key, value in m.as_dict().items():
        if key.endswith("_mm"):
            assert value == pytest.approx(0.0, abs=1e-9)


def test_uniform_offset_reads_in_millimeters(episode):
    pred = _bundle_from_truth(episode)
    pred.translations[:] += np.array([0.01, 0.0, 0.0])
    pred.decoded[:] += np.array([0.01, 0.0, 0.0])
    m = compute_metrics(pred, episode)
    d = m.as_dict()
    assert d["traj_path_mm"] == pytest.approx(10.0, abs=1e-9)
    assert d["traj_dest_mm"] == pytest.approx(10.0, abs=1e-9)
    assert d["mpjpe_path_mm"] == pytest.approx(10.0, abs=1e-9)
    assert d["mpjpe_dest_mm"] == pytest.approx(10.0, abs=1e-9)


def test_matches_brute_force_oracle(episode):
    rng = np.random.default_rng(5)
    for _ in range(20):
        pred = _bundle_from_truth(episode, rng)
        got = compute_metrics(pred, episode).as_dict()
        want = brute_force_metrics(pred, episode)
        for key, value in want.items():
            assert got[key] == pytest.approx(value, rel=1e-9)


def test_error_scales_linearly(episode):
    pred1 = _bundle_from_truth(episode)
    pred2 = _bundle_from_truth(episode)
    pred1.translations[:] += np.array([0.0, 0.05, 0.0])
    pred2.translations[:] += np.array([0.0, 0.10, 0.0])
    m1 = compute_metrics(pred1, episode).as_dict()["traj_path_mm"]
    m2 = compute_metrics(pred2, episode).as_dict()["traj_path_mm"]
    assert m2 == pytest.approx(2.0 * m1, rel=1e-9)


def test_wrong_frame_count_rejected(episode):
    pred = _bundle_from_truth(episode)
    short = PredictionBundle(
        translations=pred.translations[:-1],
        orientations=pred.orientations[:-1],
        pose_embeddings=pred.pose_embeddings[:-1],
        joints=pred.joints[:-1], decoded=pred.decoded[:-1])
    with pytest.raises(ValueError):
        compute_metrics(short, episode)


def test_report_aggregates_means(episode):
    rng = np.random.default_rng(6)
    preds = [_bundle_from_truth(episode, rng) for _ in range(3)]
    report = evaluate_episodes(preds, [episode] * 3,
                               [f"e{i}" for i in range(3)])
    assert isinstance(report, MetricReport)
    singles = [compute_metrics(p, episode) for p in preds]
    assert report.traj_dest == pytest.approx(
        np.mean([s.traj_dest for s in singles]), rel=1e-12)
    assert report.mpjpe_path == pytest.approx(
        np.mean([s.mpjpe_path for s in singles]), rel=1e-12)
    merged = merge_reports([report, report])
    assert len(merged.episodes) == 6
    assert merged.traj_dest == pytest.approx(report.traj_dest, rel=1e-12)


def test_report_requires_episodes():
    with pytest.raises(ValueError):
        MetricReport(episodes=())


def test_report_dict_layout(episode):
    report = evaluate_episodes([_bundle_from_truth(episode)], [episode],
                               ["ep0"])
    d = report.as_dict()
    assert {"traj_path_mm", "traj_dest_mm",
            "mpjpe_path_mm", "mpjpe_dest_mm"} <= set(d)
    assert d["episodes"][0]["episode_id"] == "ep0"
