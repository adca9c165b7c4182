"""Rotation utilities: quaternions, matrices, and the 6D network encoding.

Quaternions are (w, x, y, z) with w >= 0 canonical form. The 6D encoding
is the first two columns of the rotation matrix; decoding Gram-Schmidt
orthonormalizes, which removes any scaling and makes the representation
continuous for regression.

Numpy functions operate on single rotations; the torch functions are
batched and differentiable for use inside the network.
"""
from __future__ import annotations

import numpy as np
import torch

_DEGENERATE_TOL = 1e-8


# ---------------------------------------------------------------------------
# numpy, single rotation
# ---------------------------------------------------------------------------

def quat_canonical(q: np.ndarray) -> np.ndarray:
    """Normalize and flip sign so the scalar part is nonnegative."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n < _DEGENERATE_TOL:
        raise ValueError("cannot canonicalize a near-zero quaternion")
    q = q / n
    return -q if q[0] < 0 else q


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """[4] quaternion -> [3, 3] rotation matrix."""
    w, x, y, z = np.asarray(q, dtype=np.float64)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """[3, 3] rotation matrix -> canonical [4] quaternion (Shepperd's method)."""
    R = np.asarray(R, dtype=np.float64)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        q = np.array([(R[2, 1] - R[1, 2]) / s,
                      0.25 * s,
                      (R[0, 1] + R[1, 0]) / s,
                      (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        q = np.array([(R[0, 2] - R[2, 0]) / s,
                      (R[0, 1] + R[1, 0]) / s,
                      0.25 * s,
                      (R[1, 2] + R[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        q = np.array([(R[1, 0] - R[0, 1]) / s,
                      (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s,
                      0.25 * s])
    return quat_canonical(q)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a * b, both (w, x, y, z)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def yaw_quat(yaw: float) -> np.ndarray:
    """Rotation about +z by ``yaw`` radians, canonical quaternion."""
    return quat_canonical(np.array([np.cos(yaw / 2), 0.0, 0.0, np.sin(yaw / 2)]))


def random_quaternion(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation as a canonical quaternion."""
    q = rng.normal(size=4)
    return quat_canonical(q)


def geodesic_angle(qa: np.ndarray, qb: np.ndarray) -> float:
    """Rotation angle in radians between two quaternions."""
    return geodesic_angle_matrix(quat_to_matrix(qa), quat_to_matrix(qb))


def geodesic_angle_matrix(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Rotation angle in radians between two rotation matrices.

    Uses the atan2 form, which is exact at zero and stable near pi.
    """
    M = Ra.T @ Rb
    cos_term = (np.trace(M) - 1.0) / 2.0
    skew = np.array([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])
    sin_term = np.linalg.norm(skew) / 2.0
    return float(np.arctan2(sin_term, cos_term))


def rotation_encode(q: np.ndarray) -> np.ndarray:
    """Unit quaternion -> 6D encoding (first two matrix columns)."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if abs(n - 1.0) > 1e-6:
        raise ValueError(f"rotation_encode requires a unit quaternion, norm={n}")
    R = quat_to_matrix(q / n)
    return np.concatenate([R[:, 0], R[:, 1]])


def rotation_decode(v: np.ndarray) -> np.ndarray:
    """6D encoding -> canonical unit quaternion via Gram-Schmidt.

    Raises ValueError for degenerate input (zero or parallel halves).
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (6,):
        raise ValueError(f"expected a 6-vector, got shape {v.shape}")
    a1, a2 = v[:3], v[3:]
    n1 = np.linalg.norm(a1)
    if n1 < _DEGENERATE_TOL:
        raise ValueError("first half of 6D rotation encoding is (near) zero")
    b1 = a1 / n1
    u2 = a2 - np.dot(b1, a2) * b1
    n2 = np.linalg.norm(u2)
    if n2 < _DEGENERATE_TOL:
        raise ValueError("6D rotation encoding halves are (near) parallel")
    b2 = u2 / n2
    b3 = np.cross(b1, b2)
    R = np.stack([b1, b2, b3], axis=1)
    return matrix_to_quat(R)


# ---------------------------------------------------------------------------
# torch, batched and differentiable
# ---------------------------------------------------------------------------

def quat_to_matrix_torch(q: torch.Tensor) -> torch.Tensor:
    """[..., 4] quaternions -> [..., 3, 3] rotation matrices."""
    w, x, y, z = torch.unbind(q, dim=-1)
    two = 2.0
    rows = [
        1 - two * (y * y + z * z), two * (x * y - z * w), two * (x * z + y * w),
        two * (x * y + z * w), 1 - two * (x * x + z * z), two * (y * z - x * w),
        two * (x * z - y * w), two * (y * z + x * w), 1 - two * (x * x + y * y),
    ]
    return torch.stack(rows, dim=-1).reshape(q.shape[:-1] + (3, 3))


def rot6d_to_matrix(v: torch.Tensor) -> torch.Tensor:
    """[..., 6] -> [..., 3, 3] with degenerate inputs repaired, never fatal.

    Zero or parallel halves fall back to canonical basis vectors, so the
    network head can emit anything (including all zeros at init) and still
    produce valid rotations. Differentiable away from the repair branch.
    """
    a1, a2 = v[..., :3], v[..., 3:]
    e1 = torch.zeros_like(a1)
    e1[..., 0] = 1.0
    e2 = torch.zeros_like(a1)
    e2[..., 1] = 1.0

    n1 = torch.linalg.vector_norm(a1, dim=-1, keepdim=True)
    a1_safe = torch.where(n1 > _DEGENERATE_TOL, a1, e1)
    b1 = a1_safe / torch.linalg.vector_norm(a1_safe, dim=-1, keepdim=True)

    u2 = a2 - (b1 * a2).sum(-1, keepdim=True) * b1
    n2 = torch.linalg.vector_norm(u2, dim=-1, keepdim=True)
    # fallback orthogonal direction: whichever of e2 / e1 is less aligned with b1
    alt = torch.where(b1[..., 1:2].abs() < 0.9, e2, e1)
    alt = alt - (b1 * alt).sum(-1, keepdim=True) * b1
    u2_safe = torch.where(n2 > _DEGENERATE_TOL, u2, alt)
    b2 = u2_safe / torch.linalg.vector_norm(u2_safe, dim=-1, keepdim=True)

    b3 = torch.cross(b1, b2, dim=-1)
    return torch.stack([b1, b2, b3], dim=-1)


def matrix_to_rot6d(R: torch.Tensor) -> torch.Tensor:
    """[..., 3, 3] -> [..., 6] (first two columns)."""
    return torch.cat([R[..., :, 0], R[..., :, 1]], dim=-1)


def geodesic_angle_torch(Ra: torch.Tensor, Rb: torch.Tensor) -> torch.Tensor:
    """[..., 3, 3] pairs -> [...] rotation angles in radians, atan2 form."""
    M = Ra.transpose(-1, -2) @ Rb
    cos_term = (M[..., 0, 0] + M[..., 1, 1] + M[..., 2, 2] - 1.0) / 2.0
    skew = torch.stack([
        M[..., 2, 1] - M[..., 1, 2],
        M[..., 0, 2] - M[..., 2, 0],
        M[..., 1, 0] - M[..., 0, 1],
    ], dim=-1)
    sin_term = torch.linalg.vector_norm(skew, dim=-1) / 2.0
    return torch.atan2(sin_term, cos_term)
