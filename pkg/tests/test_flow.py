import numpy as np
import pytest
from hypothesis import given, strategies as st

from hdrfuse.fixtures import textured_image
from hdrfuse.flow import FlowField, FlowParams, compute_flow, n_levels, warp


def test_warp_zero_flow_is_bit_identical(rng):
    img = rng.random((17, 11, 3))
    assert np.array_equal(warp(img, FlowField.zeros(img.shape)), img)


@given(st.floats(0, 1), st.floats(-20, 20), st.floats(-20, 20))
def test_warp_constant_image(value, u, v):
    img = np.full((6, 7, 3), value)
    out = warp(img, FlowField.constant(img.shape, u, v))
    assert np.allclose(out, value, atol=1e-12)


def test_warp_ramp_hand_oracle():
    ramp = np.arange(16, dtype=np.float64).reshape(4, 4) / 15.0
    out = warp(ramp, FlowField.constant((4, 4), 1.0, 0.0))[:, :, 0]
    expected = np.empty((4, 4))
    for y in range(4):
        for x in range(4):
            expected[y, x] = ramp[y, min(x + 1, 3)]
    assert np.allclose(out, expected, atol=1e-15)


def test_warp_half_pixel_is_bilinear():
    ramp = np.tile(np.arange(5, dtype=np.float64), (3, 1))
    out = warp(ramp, FlowField.constant((3, 5), 0.5, 0.0))[:, :, 0]
    assert np.allclose(out[:, :4], ramp[:, :4] + 0.5)
    assert np.allclose(out[:, 4], 4.0)


def test_zero_motion_pair(texture64):
    f = compute_flow(texture64, texture64)
    assert np.abs(f.u).mean() < 0.1 and np.abs(f.v).mean() < 0.1
    assert f.shape == texture64.shape[:2]


def test_shift_plus_three():
    img = textured_image(128, 128, seed=3)
    shifted = warp(img, FlowField.constant(img.shape, 3.0, 0.0))
    f = compute_flow(shifted, img)
    truth = FlowField.constant(img.shape, -3.0, 0.0)
    # warp() samples at x + 3, so the copy sits 3 px to the left of the original
    epe = f.endpoint_error(truth)[8:-8, 8:-8]
    assert epe.mean() < 0.5


def test_flow_aligns_moving_onto_fixed():
    img = textured_image(96, 96, seed=5)
    moving = warp(img, FlowField.constant(img.shape, -2.5, 1.5))
    f = compute_flow(moving, img)
    err = np.abs(warp(moving, f) - img)[8:-8, 8:-8]
    assert err.mean() < 0.01


def test_flat_pair_is_finite_and_bounded():
    flat = np.full((64, 80, 3), 0.4)
    params = FlowParams(max_displacement=5.0)
    f = compute_flow(flat, flat, params)
    assert f.is_finite()
    assert np.abs(f.u).max() <= 5.0 and np.abs(f.v).max() <= 5.0


def test_deterministic(texture64):
    moving = warp(texture64, FlowField.constant(texture64.shape, 1.3, -0.7))
    a = compute_flow(moving, texture64)
    b = compute_flow(moving, texture64)
    assert np.array_equal(a.u, b.u) and np.array_equal(a.v, b.v)


def test_size_checks(rng):
    with pytest.raises(ValueError):
        compute_flow(rng.random((10, 10)), rng.random((10, 12)))
    with pytest.raises(ValueError):
        compute_flow(rng.random((5, 5)), rng.random((5, 5)))


def test_pyramid_depth_keeps_coarse_level_large():
    p = FlowParams()
    for shape in [(32, 40), (63, 63), (64, 64), (256, 256), (600, 900)]:
        levels = n_levels(shape, p)
        assert min(shape) / 2 ** (levels - 1) >= p.min_coarse_size
        assert min(shape) / 2 ** levels < p.min_coarse_size or levels == 1


def test_field_shape_mismatch():
    with pytest.raises(ValueError):
        FlowField(np.zeros((3, 3)), np.zeros((3, 4)))
