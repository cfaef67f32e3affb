import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdrfuse.metrics import q0_from_moments, q_s, q_s_stack, uiqi_window
from oracles import q0_direct, qs_direct


def test_identical_windows_exactly_one(rng):
    for _ in range(20):
        w = rng.random((8, 8))
        assert uiqi_window(w, w) == 1.0


def test_inverted_ramp_is_negative():
    a = np.array([0.1, 0.2, 0.3, 0.4])
    b = -a + 1.0
    q = uiqi_window(a, b)
    assert q < 0
    assert np.isclose(q, q0_direct(a, b))


def test_constant_windows():
    assert uiqi_window(np.full(4, 0.3), np.full(4, 0.3)) == 1.0
    assert np.isclose(uiqi_window(np.full(4, 0.2), np.full(4, 0.6)), 2 * 0.2 * 0.6 / (0.2 ** 2 + 0.6 ** 2))
    assert uiqi_window(np.zeros(4), np.zeros(4)) == 1.0


def test_zero_mean_windows_use_structure_term():
    a = np.array([-1.0, 1.0, -1.0, 1.0])
    assert uiqi_window(a, a) == 1.0
    assert uiqi_window(a, -a) == -1.0


def test_self_fusion_scores_one(rng):
    a = rng.random((20, 24, 3))
    r = q_s(a, a, a)
    assert r.q_s == 1.0
    assert r.windows == 13 * 17


def test_equal_saliency_gives_half(rng):
    a = rng.random((16, 16))
    f = rng.random((16, 16))
    # negation keeps every window variance bit-identical
    for b in (a, -a):
        assert np.all(q_s(a, b, f).lambdas == 0.5)


@pytest.mark.parametrize("seed", range(3))
def test_average_fusion_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((16, 16)), rng.random((16, 16))
    f = 0.5 * a + 0.5 * b
    assert abs(q_s(a, b, f).q_s - qs_direct(a, b, f)) < 1e-10


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_symmetry_and_bounds(seed):
    rng = np.random.default_rng(seed)
    a, b, f = (rng.random((12, 14, 3)) for _ in range(3))
    ab = q_s(a, b, f)
    ba = q_s(b, a, f)
    assert abs(ab.q_s - ba.q_s) < 1e-12
    assert abs(ab.q_s) <= 1.0
    assert np.all((ab.lambdas >= 0) & (ab.lambdas <= 1))


@settings(max_examples=50)
@given(st.lists(st.floats(-1, 1), min_size=5, max_size=5))
def test_q0_bounded(m):
    mu_a, mu_b, var_a, var_b = m[0], m[1], abs(m[2]), abs(m[3])
    cov = m[4] * np.sqrt(var_a * var_b)
    q = q0_from_moments(mu_a, mu_b, var_a, var_b, cov)
    assert abs(float(q)) <= 1.0 + 1e-12


def test_stack_averages_consecutive_pairs(rng):
    imgs = [rng.random((12, 12)) for _ in range(4)]
    f = rng.random((12, 12))
    r = q_s_stack(imgs, f)
    expected = np.mean([q_s(imgs[i], imgs[i + 1], f).q_s for i in range(3)])
    assert r.pairs == 3 and np.isclose(r.q_s, expected)
    assert r.line().startswith("Q_S=") and "windows=25 pairs=3" in r.line()


def test_errors(rng):
    with pytest.raises(ValueError):
        q_s(rng.random((10, 10)), rng.random((10, 11)), rng.random((10, 10)))
    with pytest.raises(ValueError):
        q_s(rng.random((5, 5)), rng.random((5, 5)), rng.random((5, 5)))
    with pytest.raises(ValueError):
        q_s_stack([rng.random((9, 9))], rng.random((9, 9)))


def test_large_image_chunking_matches_small_bands(rng):
    a, b = rng.random((150, 40)), rng.random((150, 40))
    f = 0.3 * a + 0.7 * b
    whole = q_s(a, b, f)
    from hdrfuse.metrics import _qs_pair
    total, lam = _qs_pair(a, b, f, 8, 1, rows_per_chunk=7)
    assert np.isclose(total / lam.size, whole.q_s, rtol=0, atol=1e-12)
