import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as npst

from laps.encoder import (EncoderConfig, Fsq, FsqConfig, SurrogateEncoder,
                          encode_stream, encode_window, fsq_quantize, velocities)
from laps.errors import DataError

from conftest import make_clip


# ---------------------------------------------------------------------------
# velocities


def test_stationary_points_zero_velocity():
    clip = make_clip(np.tile([[10.0, 20.0]], (5, 3, 1)))
    assert np.all(velocities(clip) == 0)


def test_single_step_velocity():
    clip = make_clip([[[0.0, 0.0]], [[3.0, 4.0]]])
    v = velocities(clip)
    assert v.shape == (1, 1, 2)
    assert np.allclose(v[0, 0], [3.0, 4.0])


@given(npst.arrays(np.float32, st.tuples(st.integers(2, 12), st.integers(1, 4)),
                   elements=st.floats(-1e3, 1e3, width=32)))
def test_reversed_clip_negates_reversed_velocities(xs):
    tracks = np.stack([xs, xs * 0.5 + 1.0], axis=-1)   # (T, N, 2)
    clip = make_clip(tracks)
    rev = make_clip(tracks[::-1].copy())
    assert np.array_equal(velocities(rev), -velocities(clip)[::-1])


# ---------------------------------------------------------------------------
# FSQ


def test_fsq_extreme_codes():
    fsq = Fsq(FsqConfig())
    lo_vec = fsq.low.astype(np.float64)
    hi_vec = fsq.high.astype(np.float64)
    _, code_lo = fsq.quantize(lo_vec)
    _, code_hi = fsq.quantize(hi_vec)
    assert int(code_lo) == 0
    assert int(code_hi) == 2047


def test_fsq_idempotent_on_every_grid_point():
    fsq = Fsq(FsqConfig())
    grid = fsq.all_grid_vectors()
    bounded, codes = fsq.quantize(grid)
    assert np.array_equal(bounded, grid)
    assert np.array_equal(codes, np.arange(fsq.codebook_size))


def test_fsq_quantize_single_vector():
    bounded, code = fsq_quantize(np.asarray([0.2, -0.4, 3.9, 9.0]))
    assert bounded.tolist() == [0.0, 0.0, 3.0, 1.0]   # last dim has 4 levels
    assert isinstance(code, int)


def test_fsq_code_matches_bruteforce_nearest_prototype(rng):
    fsq = Fsq(FsqConfig())
    grid = fsq.all_grid_vectors()
    x = rng.normal(0, 3, size=(200, 4))
    bounded, codes = fsq.quantize(x)
    d2 = ((bounded[:, None, :] - grid[None, :, :]) ** 2).sum(axis=2)
    assert np.array_equal(codes, d2.argmin(axis=1))


def test_fsq_rejects_nonfinite():
    with pytest.raises(DataError):
        fsq_quantize(np.asarray([np.nan, 0, 0, 0]))


def test_fsq_levels_validated():
    with pytest.raises(DataError):
        FsqConfig(levels=(8, 1, 8, 4))


def test_fsq_odd_levels_grid():
    fsq = Fsq(FsqConfig(levels=(5, 3), latent_dim=8))
    assert fsq.low.tolist() == [-2, -1]
    assert fsq.high.tolist() == [2, 1]
    assert fsq.codebook_size == 15


# ---------------------------------------------------------------------------
# window encoding


def test_zero_velocities_constant_code():
    cfg = EncoderConfig(n_points=3)
    pairs = encode_window(np.zeros((15, 3, 2)), cfg)
    codes = {c for _, c in pairs}
    assert len(pairs) == 15
    assert len(codes) == 1


def test_encode_window_deterministic(rng):
    cfg = EncoderConfig(n_points=3, seed=5)
    window = rng.normal(size=(15, 3, 2))
    a = encode_window(window, cfg)
    b = encode_window(window, cfg)
    assert [c for _, c in a] == [c for _, c in b]
    assert all(np.array_equal(x, y) for (x, _), (y, _) in zip(a, b))


def test_translation_invariance(rng):
    # integer-valued tracks and shift are exact in f32, so velocities match
    cfg = EncoderConfig(n_points=4, seed=5)
    tracks = rng.integers(0, 200, size=(16, 4, 2)).astype(np.float32)
    shifted = tracks + np.float32(37.0)
    enc = SurrogateEncoder(cfg)
    codes_a, _ = enc.encode_steps(velocities(make_clip(tracks)))
    codes_b, _ = enc.encode_steps(velocities(make_clip(shifted)))
    assert np.array_equal(codes_a, codes_b)


def test_window_shape_mismatch():
    cfg = EncoderConfig(n_points=3)
    with pytest.raises(DataError):
        encode_window(np.zeros((10, 3, 2)), cfg)
    with pytest.raises(DataError):
        encode_window(np.zeros((15, 2, 2)), cfg)


# ---------------------------------------------------------------------------
# stream encoding


def test_single_window_stream(rng):
    cfg = EncoderConfig(window=16, hop=16, n_points=2)
    clip = make_clip(rng.normal(size=(16, 2, 2)).astype(np.float32))
    stream = encode_stream(clip, cfg)
    assert stream.steps == 15
    assert np.array_equal(stream.frame_of_step, np.arange(15))


def test_two_window_stream(rng):
    cfg = EncoderConfig(window=16, hop=16, n_points=2)
    clip = make_clip(rng.normal(size=(32, 2, 2)).astype(np.float32))
    stream = encode_stream(clip, cfg)
    assert stream.steps == 30
    assert np.all(np.diff(stream.frame_of_step) > 0)
    # the cross-window velocity step (frame 15 -> 16) is never emitted
    assert 15 not in stream.frame_of_step


def test_overlapping_hop_emits_final_region(rng):
    cfg = EncoderConfig(window=8, hop=4, n_points=2)
    clip = make_clip(rng.normal(size=(20, 2, 2)).astype(np.float32))
    stream = encode_stream(clip, cfg)
    # windows at 0, 4, 8, 12: each emits its last 4 velocity steps
    assert stream.steps == 16
    assert np.all(np.diff(stream.frame_of_step) > 0)


def test_vectors_are_exact_prototypes(rng):
    cfg = EncoderConfig(n_points=2, seed=9)
    clip = make_clip(rng.normal(0, 2, size=(48, 2, 2)).astype(np.float32))
    enc = SurrogateEncoder(cfg)
    stream = enc.encode_stream(clip)
    assert np.array_equal(stream.vectors, enc.prototypes[stream.codes])
    assert stream.codebook_size == 2048
    assert stream.dim == 768


def test_stream_determinism(rng):
    cfg = EncoderConfig(n_points=2, seed=3)
    clip = make_clip(rng.normal(size=(40, 2, 2)).astype(np.float32))
    a = encode_stream(clip, cfg)
    b = encode_stream(clip, cfg)
    assert np.array_equal(a.codes, b.codes)
    assert np.array_equal(a.vectors, b.vectors)
    assert np.array_equal(a.frame_of_step, b.frame_of_step)


def test_short_clip_rejected(rng):
    cfg = EncoderConfig(window=16, n_points=2)
    clip = make_clip(rng.normal(size=(10, 2, 2)).astype(np.float32))
    with pytest.raises(DataError, match="shorter than one window"):
        encode_stream(clip, cfg)


def test_wrong_point_count_rejected(rng):
    cfg = EncoderConfig(n_points=5)
    clip = make_clip(rng.normal(size=(20, 2, 2)).astype(np.float32))
    with pytest.raises(DataError, match="points"):
        encode_stream(clip, cfg)


def test_distinct_codes_have_distinct_prototypes():
    enc = SurrogateEncoder(EncoderConfig(n_points=2))
    protos = enc.prototypes
    sample = np.random.default_rng(0).choice(len(protos), size=64, replace=False)
    d = np.linalg.norm(protos[sample][:, None] - protos[sample][None], axis=2)
    off_diag = d[~np.eye(len(sample), dtype=bool)]
    assert off_diag.min() > 0.5
