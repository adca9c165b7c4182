"""Local scene attention: body-frame normalization and bias semantics."""
from __future__ import annotations

import numpy as np
import pytest
import torch

from scenemotion.core.rotations import quat_to_matrix, random_quaternion, yaw_quat
from scenemotion.sca import (ScaBlock, ScaStack, SpatialBias,
                             relative_normalize, relative_normalize_torch,
                             salience_weighted_values)


def _random_traj(rng, k):
    trans = rng.normal(size=(k, 3))
    quats = np.stack([random_quaternion(rng) for _ in range(k)])
    return trans, quats


def test_relative_normalize_brute_force():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(7, 3))
    trans, quats = _random_traj(rng, 4)
    rel = relative_normalize(pts, trans, quats)
    assert rel.shape == (4, 7, 3)
    for k in range(4):
        R = quat_to_matrix(quats[k])
        for i in range(7):
            assert np.allclose(rel[k, i], R.T @ (pts[i] - trans[k]),
                               atol=1e-12)


def test_relative_normalize_rigid_invariance():
    rng = np.random.default_rng(1)
    for _ in range(20):
        pts = rng.normal(size=(9, 3))
        trans, quats = _random_traj(rng, 5)
        rel = relative_normalize(pts, trans, quats)
        # one rigid transform applied to scene and trajectory together
        g = quat_to_matrix(random_quaternion(rng))
        shift = rng.normal(size=3)
        pts2 = pts @ g.T + shift
        trans2 = trans @ g.T + shift
        quats2 = []
        for q in quats:
            R2 = g @ quat_to_matrix(q)
            # rebuild a quaternion via the 6D route to stay unit-normalized
            from scenemotion.core.rotations import matrix_to_quat
            quats2.append(matrix_to_quat(R2))
        rel2 = relative_normalize(pts2, trans2, np.stack(quats2))
        assert np.max(np.abs(rel - rel2)) < 1e-9


def test_relative_normalize_validation():
    pts = np.zeros((3, 3))
    with pytest.raises(ValueError):
        relative_normalize(pts, np.zeros((2, 3)), np.zeros((3, 4)))
    bad = np.array([[0.5, 0.5, 0.0, 0.0]])  # not unit
    with pytest.raises(ValueError):
        relative_normalize(pts, np.zeros((1, 3)), bad)


def test_relative_normalize_torch_matches_numpy():
    rng = np.random.default_rng(2)
    pts = rng.normal(size=(6, 3))
    trans, quats = _random_traj(rng, 3)
    rel_np = relative_normalize(pts, trans, quats)
    rots = np.stack([quat_to_matrix(q) for q in quats])
    rel_t = relative_normalize_torch(
        torch.as_tensor(pts)[None], torch.as_tensor(trans)[None],
        torch.as_tensor(rots)[None])
    assert np.allclose(rel_t[0].numpy(), rel_np, atol=1e-12)


def test_local_salience_rows_are_distributions():
    torch.manual_seed(0)
    block = ScaBlock(16, 8, heads=4, ff_dim=32, mlp_hidden=24).double()
    rng = np.random.default_rng(3)
    for _ in range(25):
        f_in = torch.as_tensor(rng.normal(size=(2, 5, 16)))
        points = torch.as_tensor(rng.normal(size=(2, 11, 8)))
        rel = torch.as_tensor(rng.normal(size=(2, 5, 11, 3)))
        _, local, bias = block(f_in, points, rel)
        assert local.shape == (2, 5, 11)
        assert torch.all(local >= 0)
        assert torch.allclose(local.sum(-1),
                              torch.ones(2, 5, dtype=torch.float64),
                              atol=1e-12)
        # the bias is additive after normalization: rows of the sum are
        # free to leave the simplex
        assert bias.shape == (2, 5, 11)


def test_block_identity_at_init():
    torch.manual_seed(1)
    block = ScaBlock(16, 8, heads=4, ff_dim=32, mlp_hidden=24).double()
    f_in = torch.randn(2, 5, 16, dtype=torch.float64)
    points = torch.randn(2, 9, 8, dtype=torch.float64)
    rel = torch.randn(2, 5, 9, 3, dtype=torch.float64)
    out, _, _ = block(f_in, points, rel)
    assert torch.equal(out, f_in)


def test_block_rejects_frame_mismatch():
    block = ScaBlock(16, 8, heads=4, ff_dim=32, mlp_hidden=24)
    with pytest.raises(ValueError):
        block(torch.zeros(1, 5, 16), torch.zeros(1, 9, 8),
              torch.zeros(1, 4, 9, 3))


def test_coordinate_pathway_rigid_invariance():
    # features frozen; scene coordinates and trajectory transformed by the
    # same rigid motion: the block output must not move
    torch.manual_seed(2)
    block = ScaBlock(16, 8, heads=4, ff_dim=32, mlp_hidden=24).double()
    with torch.no_grad():
        for p in block.parameters():
            p.add_(torch.randn_like(p) * 0.05)  # leave the identity regime
    rng = np.random.default_rng(4)
    pts = rng.normal(size=(10, 3))
    trans, quats = _random_traj(rng, 5)
    rots = np.stack([quat_to_matrix(q) for q in quats])
    f_in = torch.as_tensor(rng.normal(size=(1, 5, 16)))
    feats = torch.as_tensor(rng.normal(size=(1, 10, 8)))

    def run(p, t, r):
        rel = relative_normalize_torch(
            torch.as_tensor(p)[None], torch.as_tensor(t)[None],
            torch.as_tensor(r)[None])
        with torch.no_grad():
            out, local, bias = block(f_in, feats, rel)
        return out, local, bias

    base_out, base_local, base_bias = run(pts, trans, rots)
    for _ in range(5):
        g = quat_to_matrix(random_quaternion(rng))
        shift = rng.normal(size=3)
        out, local, bias = run(pts @ g.T + shift, trans @ g.T + shift,
                               np.einsum("ij,kjl->kil", g, rots))
        assert torch.allclose(out, base_out, atol=1e-5)
        assert torch.allclose(bias, base_bias, atol=1e-5)
        assert torch.allclose(local, base_local, atol=1e-5)


def test_spatial_bias_depends_only_on_rel():
    torch.manual_seed(3)
    bias = SpatialBias(hidden=16).double()
    rel = torch.randn(2, 4, 7, 3, dtype=torch.float64)
    out = bias(rel)
    assert out.shape == (2, 4, 7)
    assert torch.allclose(bias(rel.clone()), out)


def test_salience_weighted_values_linear():
    torch.manual_seed(4)
    s = torch.rand(1, 4, 6, dtype=torch.float64)
    b = torch.randn(1, 4, 6, dtype=torch.float64)
    v = torch.randn(1, 6, 8, dtype=torch.float64)
    got = salience_weighted_values(s, b, v)
    want = torch.einsum("bkn,bnc->bkc", s, v) + torch.einsum(
        "bkn,bnc->bkc", b, v)
    assert torch.allclose(got, want, atol=1e-12)


def test_stack_collects_per_block_outputs():
    torch.manual_seed(5)
    stack = ScaStack(2, 16, 8, heads=4, ff_dim=32, mlp_hidden=24).double()
    f_in = torch.randn(2, 5, 16, dtype=torch.float64)
    points = torch.randn(2, 7, 8, dtype=torch.float64)
    rel = torch.randn(2, 5, 7, 3, dtype=torch.float64)
    out = stack(f_in, points, rel)
    assert torch.equal(out.values, f_in)
    assert len(out.local_salience) == 2 and len(out.spatial_bias) == 2
    for s in out.local_salience:
        assert torch.allclose(s.sum(-1), torch.ones(2, 5, dtype=torch.float64))
