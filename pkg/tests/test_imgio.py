import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from hdrfuse.imgio import (ExposureStack, UnsupportedImageError, dequantize, load_flo, load_image,
                           load_pgm16, load_stack, quantize, save_flo, save_image, save_pgm16, to_gray)

unit_floats = st.floats(0.0, 1.0, allow_nan=False)


def _write_gray_png(path, values):
    Image.fromarray(np.asarray(values, dtype=np.uint8), mode="L").save(path)


@pytest.mark.parametrize("byte, sample", [(255, 1.0), (0, 0.0)])
def test_one_pixel_png(tmp_path, byte, sample):
    p = tmp_path / "px.png"
    _write_gray_png(p, [[byte]])
    img = load_image(p)
    assert img.shape == (1, 1, 1)
    assert img[0, 0, 0] == sample


def test_two_by_two_ppm_bytes(tmp_path):
    raw = bytes([0, 128, 255, 64])
    pgm = tmp_path / "g.pgm"
    pgm.write_bytes(b"P5\n2 2\n255\n" + raw)
    ppm = tmp_path / "g.ppm"
    ppm.write_bytes(b"P6\n2 2\n255\n" + bytes(b for v in raw for b in (v, v, v)))
    expected = np.array([[0, 128], [255, 64]]) / 255.0
    assert np.array_equal(load_image(pgm)[:, :, 0], expected)
    rgb = load_image(ppm)
    assert rgb.shape == (2, 2, 3)
    for c in range(3):
        assert np.array_equal(rgb[:, :, c], expected)


@pytest.mark.parametrize("sample, byte", [(0.5, 128), (1.0, 255), (0.337, 86), (0.0, 0), (1.7, 255), (-0.2, 0)])
def test_quantization_examples(tmp_path, sample, byte):
    assert quantize(np.array([sample]))[0] == byte
    p = tmp_path / "q.png"
    save_image(np.full((1, 1, 1), sample), p)
    assert load_image(p)[0, 0, 0] == byte / 255.0


@given(arrays(np.float64, (5, 7, 3), elements=st.floats(-0.5, 1.5, allow_nan=False)))
def test_quantize_idempotent(x):
    q = quantize(x)
    assert np.array_equal(quantize(dequantize(q)), q)


@pytest.mark.parametrize("ext", [".png", ".ppm"])
def test_round_trip_is_clamp_quantized(tmp_path, rng, ext):
    img = rng.uniform(-0.1, 1.1, size=(9, 13, 3))
    p = tmp_path / f"rt{ext}"
    save_image(img, p)
    back = load_image(p)
    assert np.array_equal(quantize(back), quantize(img))
    assert back.min() >= 0.0 and back.max() <= 1.0


def test_pgm_requires_one_channel(tmp_path, rng):
    with pytest.raises(ValueError):
        save_image(rng.random((4, 4, 3)), tmp_path / "x.pgm")
    save_image(rng.random((4, 4, 1)), tmp_path / "x.pgm")


def test_unsupported_depth_rejected(tmp_path):
    p = tmp_path / "deep.png"
    Image.fromarray(np.full((3, 3), 40000, dtype=np.uint16)).save(p)
    with pytest.raises(UnsupportedImageError):
        load_image(p)


def test_missing_file_raises_oserror(tmp_path):
    with pytest.raises(OSError):
        load_image(tmp_path / "absent.png")


def test_alpha_dropped(tmp_path):
    p = tmp_path / "rgba.png"
    Image.fromarray(np.full((2, 2, 4), 200, dtype=np.uint8), mode="RGBA").save(p)
    assert load_image(p).shape == (2, 2, 3)


def test_load_stack_keeps_order(tmp_path):
    paths = []
    for i, v in enumerate([200, 30, 120]):
        p = tmp_path / f"{i}.png"
        _write_gray_png(p, np.full((4, 5), v))
        paths.append(p)
    stack = load_stack(paths, 1)
    assert [im[0, 0, 0] for im in stack.images] == [200 / 255, 30 / 255, 120 / 255]
    assert stack.ref_index == 1
    assert not stack.is_monotone()


def test_load_stack_errors(tmp_path):
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    _write_gray_png(a, np.zeros((4, 4)))
    _write_gray_png(b, np.zeros((4, 5)))
    with pytest.raises(ValueError):
        load_stack([a, b], 0)
    with pytest.raises(ValueError):
        load_stack([a, a], 2)
    with pytest.raises(ValueError):
        load_stack([a], 0)


def test_stack_invariants():
    img = np.zeros((3, 3, 3))
    with pytest.raises(ValueError):
        ExposureStack((img, np.zeros((3, 4, 3))), 0)
    with pytest.raises(ValueError):
        ExposureStack((img, img), -1)
    s = ExposureStack((img, img + 0.5), 0)
    assert s.is_monotone() and s.shape == (3, 3, 3)


def test_luma_weights():
    px = np.array([[[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]], [[0.0, 0.0, 1.0]]])
    assert np.allclose(to_gray(px)[:, 0], [0.299, 0.587, 0.114])


def test_pgm16_and_flo_round_trip(tmp_path, rng):
    labels = rng.integers(0, 700, size=(6, 9))
    save_pgm16(labels, tmp_path / "l.pgm")
    assert np.array_equal(load_pgm16(tmp_path / "l.pgm"), labels)
    u = rng.normal(size=(5, 8)).astype(np.float32)
    v = rng.normal(size=(5, 8)).astype(np.float32)
    save_flo(u, v, tmp_path / "f.flo")
    assert (tmp_path / "f.flo").read_bytes()[:4] == b"PIEH"
    u2, v2 = load_flo(tmp_path / "f.flo")
    assert np.array_equal(u2, u) and np.array_equal(v2, v)
