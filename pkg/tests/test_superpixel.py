import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from skimage import color, measure

from hdrfuse.fixtures import textured_image
from hdrfuse.superpixel import SuperpixelMap, slic_segment
from oracles import best_vertical_split


def assert_valid_partition(sp, shape):
    assert sp.labels.shape == shape
    assert sp.sizes.sum() == shape[0] * shape[1]
    assert set(np.unique(sp.labels)) == set(range(sp.count))
    for lab in range(sp.count):
        _, n = measure.label(sp.labels == lab, connectivity=1, return_num=True)
        assert n == 1, f"label {lab} has {n} pieces"


def test_textured_partition(texture64):
    sp = slic_segment(texture64, 24)
    assert_valid_partition(sp, (64, 64))
    assert 12 <= sp.count <= 24


@settings(max_examples=15)
@given(st.integers(12, 40), st.integers(12, 40), st.integers(2, 20), st.integers(0, 10_000))
def test_partition_property(h, w, n, seed):
    img = np.random.default_rng(seed).random((h, w, 3))
    sp = slic_segment(img, n)
    assert_valid_partition(sp, (h, w))


def test_constant_image_four_regions():
    sp = slic_segment(np.full((64, 64, 3), 0.5), 4)
    assert sp.count == 4
    quarter = 64 * 64 / 4
    assert np.all(sp.sizes <= 2 * quarter) and np.all(sp.sizes >= quarter / 2)
    assert_valid_partition(sp, (64, 64))


def test_single_superpixel(texture64):
    sp = slic_segment(texture64, 1)
    assert sp.count == 1 and np.all(sp.labels == 0)


def test_two_tone_split_matches_two_means_oracle():
    h, w, edge = 16, 32, 13
    img = np.full((h, w, 3), 0.2)
    img[:, edge:] = 0.8
    m = 1.0
    sp = slic_segment(img, 2, compactness=m)
    assert sp.count == 2

    # brute force over vertical splits in the same scaled lab+xy space
    step = np.sqrt(h * w / 2)
    lab = color.rgb2lab(img)
    ys, xs = np.indices((h, w), dtype=np.float64)
    feat = np.concatenate([lab, (m / step) * xs[..., None], (m / step) * ys[..., None]], axis=2)
    c_oracle = best_vertical_split(feat)
    assert c_oracle == edge
    for row in sp.labels:
        changes = np.flatnonzero(row[1:] != row[:-1]) + 1
        assert len(changes) == 1
        assert abs(changes[0] - c_oracle) <= 2


def test_deterministic(texture64):
    a = slic_segment(texture64, 30)
    b = slic_segment(texture64, 30)
    assert np.array_equal(a.labels, b.labels)


def test_gray_input():
    img = textured_image(40, 48, seed=2, channels=1)
    assert_valid_partition(slic_segment(img, 10), (40, 48))


def test_bad_counts(texture64):
    with pytest.raises(ValueError):
        slic_segment(texture64, 0)
    with pytest.raises(ValueError):
        slic_segment(np.zeros((3, 3, 3)), 10)


def test_map_geometry():
    labels = np.array([[0, 0, 1], [2, 2, 1]])
    sp = SuperpixelMap(labels)
    assert sp.count == 3
    assert list(sp.sizes) == [2, 2, 2]
    assert tuple(sp.bboxes[1]) == (2, 0, 1, 2)
    assert sp.boundaries()[0, 2] and not sp.boundaries()[0, 1]
    with pytest.raises(ValueError):
        SuperpixelMap(np.array([[0, 2]]))
