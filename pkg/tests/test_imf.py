import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdrfuse.fixtures import textured_image
from hdrfuse.imf import (apply_imf, estimate_imf, histogram_emd, identity_curve, levels_of,
                         load_curve_csv, save_curve_csv)


def _ramp(h=64, w=256):
    return np.tile(np.linspace(0.0, 1.0, w), (h, 1))[:, :, None]


def test_self_mapping_within_one_level(texture64):
    out = apply_imf(texture64, estimate_imf(texture64, texture64))
    assert np.abs(out - texture64).max() <= 1 / 255 + 1e-12


def test_gain_half_on_ramp():
    src = _ramp()
    tgt = np.clip(0.5 * src, 0, 1)
    curve = estimate_imf(src, tgt)[0]
    v = np.arange(256) / 255.0
    assert np.abs(curve - 0.5 * v).max() <= 2 / 255
    out = apply_imf(src, estimate_imf(src, tgt))
    assert np.abs(out - 0.5 * src).max() <= 2 / 255


def test_constant_images():
    curve = estimate_imf(np.full((5, 5, 1), 0.3), np.full((5, 5, 1), 0.8))
    assert curve[0, levels_of(np.array(0.3))] == levels_of(np.array(0.8)) / 255.0


def test_identity_and_zero_curves(texture64):
    assert np.abs(apply_imf(texture64, identity_curve(3)) - texture64).max() <= 0.5 / 255 + 1e-12
    assert np.all(apply_imf(texture64, np.zeros((3, 256))) == 0.0)


def test_ties_go_to_lowest_level():
    # target uses only levels 0 and 255; half the source mass maps to each
    src = np.array([[0.0, 0.0, 1.0, 1.0]])[:, :, None]
    tgt = np.array([[0.0, 0.0, 1.0, 1.0]])[:, :, None]
    curve = estimate_imf(src, tgt)[0]
    assert curve[0] == 0.0 and curve[255] == 1.0
    # empty source levels between share the cdf of level 0 and map to level 0
    assert np.all(curve[1:255] == 0.0)


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.floats(0.2, 3.0))
def test_curves_monotone_and_in_range(seed, gain):
    rng = np.random.default_rng(seed)
    a = rng.random((20, 30, 3)) ** rng.uniform(0.5, 2)
    b = np.clip(gain * a + rng.normal(0, 0.02, a.shape), 0, 1)
    curve = estimate_imf(a, b)
    assert np.all(np.diff(curve, axis=1) >= 0)
    assert curve.min() >= 0 and curve.max() <= 1


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_shuffle_invariance(seed):
    rng = np.random.default_rng(seed)
    a = rng.random((16, 16, 3))
    b = np.clip(a * 1.7, 0, 1)
    perm_a = rng.permutation(a.reshape(-1, 3)).reshape(a.shape)
    perm_b = rng.permutation(b.reshape(-1, 3)).reshape(b.shape)
    assert np.array_equal(estimate_imf(a, b), estimate_imf(perm_a, perm_b))


@pytest.mark.parametrize("gain", [0.5, 0.8, 1.6])
def test_mapped_histogram_matches_target(gain):
    a = textured_image(64, 64, seed=4, lo=0.05, hi=0.6)
    b = np.clip(gain * a, 0, 1)
    mapped = apply_imf(a, estimate_imf(a, b))
    assert histogram_emd(mapped, b) <= 2 / 255


def test_channel_mismatch_and_csv(tmp_path, texture64):
    with pytest.raises(ValueError):
        estimate_imf(texture64, texture64[:, :, :1])
    with pytest.raises(ValueError):
        apply_imf(texture64, identity_curve(1))
    curve = estimate_imf(texture64, texture64 * 0.5)
    save_curve_csv(curve, tmp_path / "c.csv")
    assert np.allclose(load_curve_csv(tmp_path / "c.csv"), curve, atol=1e-6)
