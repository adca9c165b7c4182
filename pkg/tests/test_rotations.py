"""Quaternion / rotation-matrix / 6D-encoding conversions."""
from __future__ import annotations

import numpy as np
import pytest
import torch

from scenemotion.core.rotations import (geodesic_angle, geodesic_angle_matrix,
                                        geodesic_angle_torch, matrix_to_quat,
                                        matrix_to_rot6d, quat_canonical,
                                        quat_multiply, quat_to_matrix,
                                        quat_to_matrix_torch, random_quaternion,
                                        rot6d_to_matrix, rotation_decode,
                                        rotation_encode, yaw_quat)


def test_quat_matrix_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(100):
        q = random_quaternion(rng)
        R = quat_to_matrix(q)
        assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert np.isclose(np.linalg.det(R), 1.0, atol=1e-12)
        assert np.allclose(matrix_to_quat(R), q, atol=1e-9)


def test_quat_canonical_sign():
    q = np.array([-1.0, 0.0, 0.0, 0.0])
    assert quat_canonical(q)[0] == 1.0
    rng = np.random.default_rng(1)
    for _ in range(20):
        q = random_quaternion(rng)
        assert np.allclose(quat_to_matrix(q), quat_to_matrix(-q), atol=1e-12)


def test_quat_multiply_composes():
    rng = np.random.default_rng(2)
    for _ in range(30):
        a, b = random_quaternion(rng), random_quaternion(rng)
        left = quat_to_matrix(quat_multiply(a, b))
        right = quat_to_matrix(a) @ quat_to_matrix(b)
        assert np.allclose(left, right, atol=1e-12)


def test_yaw_quat_rotates_about_z():
    yaw = 0.7
    R = quat_to_matrix(yaw_quat(yaw))
    expected = np.array([
        [np.cos(yaw), -np.sin(yaw), 0.0],
        [np.sin(yaw), np.cos(yaw), 0.0],
        [0.0, 0.0, 1.0],
    ])
    assert np.allclose(R, expected, atol=1e-12)


def test_geodesic_angle_known_values():
    rng = np.random.default_rng(3)
    q = random_quaternion(rng)
    assert geodesic_angle(q, q) == 0.0
    for theta in [1e-7, 1e-4, 0.5, 2.0, np.pi - 1e-6]:
        qa = yaw_quat(0.0)
        qb = yaw_quat(theta)
        assert np.isclose(geodesic_angle(qa, qb), theta, rtol=1e-6, atol=1e-12)


def test_geodesic_angle_small_angles_resolved():
    # the atan2 form stays accurate where acos would collapse to 0
    for theta in np.logspace(-8, -2, 7):
        Ra = np.eye(3)
        Rb = quat_to_matrix(yaw_quat(theta))
        assert np.isclose(geodesic_angle_matrix(Ra, Rb), theta, rtol=1e-5)


def test_rotation_encode_decode_round_trip():
    rng = np.random.default_rng(4)
    for _ in range(50):
        q = random_quaternion(rng)
        assert np.allclose(rotation_decode(rotation_encode(q)), q, atol=1e-9)


def test_rotation_encode_rejects_non_unit():
    with pytest.raises(ValueError):
        rotation_encode(np.array([2.0, 0.0, 0.0, 0.0]))


def test_rotation_decode_rejects_degenerate():
    with pytest.raises(ValueError):
        rotation_decode(np.zeros(6))
    with pytest.raises(ValueError):
        rotation_decode(np.array([1.0, 0, 0, 2.0, 0, 0]))


def test_rot6d_repairs_degenerate_inputs():
    v = torch.zeros(4, 6, dtype=torch.float64)
    v[1, :3] = torch.tensor([1.0, 0, 0])
    v[2] = torch.tensor([1.0, 0, 0, 1.0, 0, 0])  # parallel halves
    v[3] = torch.tensor([0.0, 2.0, 0, 0, 0, 3.0])
    R = rot6d_to_matrix(v)
    eye = torch.eye(3, dtype=torch.float64)
    for k in range(4):
        assert torch.allclose(R[k] @ R[k].mT, eye, atol=1e-12)
        assert torch.isclose(torch.linalg.det(R[k]), torch.tensor(1.0, dtype=torch.float64))


def test_rot6d_matches_numpy_decode_on_valid_input():
    rng = np.random.default_rng(5)
    for _ in range(20):
        q = random_quaternion(rng)
        six = rotation_encode(q) + rng.normal(scale=0.05, size=6)
        R_t = rot6d_to_matrix(torch.as_tensor(six)).numpy()
        q_np = rotation_decode(six)
        assert np.allclose(R_t, quat_to_matrix(q_np), atol=1e-9)


def test_rot6d_round_trip_with_matrix_to_rot6d():
    rng = np.random.default_rng(6)
    q = np.stack([random_quaternion(rng) for _ in range(8)])
    R = quat_to_matrix_torch(torch.as_tensor(q))
    assert torch.allclose(rot6d_to_matrix(matrix_to_rot6d(R)), R, atol=1e-12)


def test_rot6d_differentiable():
    v = torch.randn(5, 6, dtype=torch.float64, requires_grad=True)
    R = rot6d_to_matrix(v)
    R.sum().backward()
    assert torch.isfinite(v.grad).all()


def test_torch_matches_numpy_quat_to_matrix():
    rng = np.random.default_rng(7)
    q = np.stack([random_quaternion(rng) for _ in range(16)])
    R_np = np.stack([quat_to_matrix(x) for x in q])
    R_t = quat_to_matrix_torch(torch.as_tensor(q)).numpy()
    assert np.allclose(R_np, R_t, atol=1e-12)


def test_geodesic_torch_matches_numpy():
    rng = np.random.default_rng(8)
    for _ in range(20):
        Ra = quat_to_matrix(random_quaternion(rng))
        Rb = quat_to_matrix(random_quaternion(rng))
        got = geodesic_angle_torch(torch.as_tensor(Ra), torch.as_tensor(Rb))
        assert np.isclose(float(got), geodesic_angle_matrix(Ra, Rb), atol=1e-12)
