"""Motion and gaze encoders: closed-form tables, identity at init."""
from __future__ import annotations

import math

import numpy as np
import pytest
import torch

from scenemotion.core.rotations import rotation_encode
from scenemotion.core.types import (HorizonConfig, MotionSequence,
                                    pad_virtual_sequence)
from scenemotion.motion_encoder import (MOTION_INPUT_DIM, GazeEncoder,
                                        MotionEncoder, MultiheadAttention,
                                        build_gaze_track,
                                        motion_input_features,
                                        positional_encoding)
from scenemotion.synthworld import generate_episode, generate_scene


def test_positional_encoding_closed_form():
    table = positional_encoding(12, 8, torch.float64).numpy()
    for pos in range(12):
        for i in range(4):
            freq = math.exp(2 * i * (-math.log(10000.0) / 8))
            assert table[pos, 2 * i] == pytest.approx(math.sin(pos * freq))
            assert table[pos, 2 * i + 1] == pytest.approx(math.cos(pos * freq))


def test_positional_encoding_distinguishes_positions():
    table = positional_encoding(50, 16)
    d = torch.cdist(table, table)
    off_diag = d + torch.eye(50) * 1e9
    assert off_diag.min() > 1e-3


def _demo_sequence(seed: int = 0) -> MotionSequence:
    from scenemotion.synthworld.scenes import benchmark_scene_specs
    spec = benchmark_scene_specs(1, seed=7, target_points=512)[0]
    rec = generate_episode(spec, seed, HorizonConfig())
    return rec.observed


def test_motion_input_features_layout():
    seq = _demo_sequence()
    feats = motion_input_features(seq)
    assert feats.shape == (len(seq.frames), MOTION_INPUT_DIM)
    frame = seq.frames[2]
    row = feats[2]
    assert np.allclose(row[:3], frame.translation)
    assert np.allclose(row[3:9], rotation_encode(frame.orientation))
    assert np.allclose(row[9:], frame.pose_embedding)


def test_motion_encoder_identity_at_init():
    torch.manual_seed(0)
    enc = MotionEncoder(dim=32, layers=3, heads=4, ff_dim=64).double()
    x = torch.randn(2, 7, MOTION_INPUT_DIM, dtype=torch.float64)
    with torch.no_grad():
        out = enc(x)
        base = enc.lift(x) + positional_encoding(7, 32, torch.float64)
    assert torch.equal(out, base)


def test_motion_encoder_rejects_wrong_width():
    enc = MotionEncoder(dim=16, layers=1, heads=2, ff_dim=32)
    with pytest.raises(ValueError):
        enc(torch.zeros(1, 4, MOTION_INPUT_DIM + 1))


def test_attention_rows_mix_memory():
    torch.manual_seed(1)
    attn = MultiheadAttention(16, 4)
    # zero-init output projection: contributes nothing at first
    assert torch.all(attn.out_proj.weight == 0)
    with torch.no_grad():
        out = attn(torch.randn(2, 5, 16))
    assert torch.all(out == 0)
    # after perturbing the output projection the result depends on memory
    with torch.no_grad():
        attn.out_proj.weight.add_(torch.randn_like(attn.out_proj.weight))
        q = torch.randn(1, 3, 16)
        a = attn(q, torch.randn(1, 6, 16))
        b = attn(q, torch.randn(1, 6, 16))
    assert not torch.allclose(a, b)


def test_gaze_track_selects_and_pads():
    feats = torch.arange(24, dtype=torch.float32).reshape(1, 6, 4)
    idx = torch.tensor([[2, 0, 5]])
    track = build_gaze_track(feats, idx, total_frames=5)
    assert track.shape == (1, 5, 4)
    assert torch.equal(track[0, 0], feats[0, 2])
    assert torch.equal(track[0, 1], feats[0, 0])
    assert torch.equal(track[0, 2], feats[0, 5])
    # frames past the observed window repeat the last gazed feature
    assert torch.equal(track[0, 3], feats[0, 5])
    assert torch.equal(track[0, 4], feats[0, 5])


def test_gaze_track_rejects_overlong_index():
    feats = torch.zeros(1, 4, 2)
    with pytest.raises(ValueError):
        build_gaze_track(feats, torch.zeros(1, 6, dtype=torch.long), 5)


def test_gaze_encoder_shapes_and_init():
    torch.manual_seed(2)
    enc = GazeEncoder(scene_dim=8, dim=16, heads=4, ff_dim=32).double()
    track = torch.randn(3, 9, 8, dtype=torch.float64)
    with torch.no_grad():
        out = enc(track)
        base = enc.lift(track) + positional_encoding(9, 16, torch.float64)
    assert out.shape == (3, 9, 16)
    assert torch.equal(out, base)


def test_pad_virtual_sequence_repeats_last_frame():
    seq = _demo_sequence()
    padded = pad_virtual_sequence(seq, 10)
    assert len(padded.frames) == len(seq.frames) + 10
    assert np.allclose(padded.frames[-1].translation,
                       seq.frames[-1].translation)
    feats = motion_input_features(padded)
    assert np.allclose(feats[len(seq.frames):], feats[len(seq.frames) - 1])
