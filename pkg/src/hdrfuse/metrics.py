"""Piella-Heijmans fusion quality ``Q_S`` built on the universal image quality index.

Windows are 8x8, stride 1, on luma.  Local saliency is the window variance.
Stacks with more than two inputs are scored as the mean ``Q_S`` over
consecutive exposure pairs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imgio import to_gray

WINDOW = 8
STRIDE = 1
# variances / mean-square sums below this count as exactly zero
TINY = 1e-12


@dataclass
class QualityReport:
    q_s: float
    lambdas: np.ndarray | None
    window_size: int
    window_stride: int
    windows: int
    pairs: int = 1
    pair_scores: tuple[float, ...] = ()

    def line(self) -> str:
        return f"Q_S={self.q_s:.6f} windows={self.windows} pairs={self.pairs}"


def q0_from_moments(mu_a, mu_b, var_a, var_b, cov_ab):
    """Vectorised ``Q_0`` with the degenerate-window rules applied elementwise."""
    mu_a, mu_b, var_a, var_b, cov_ab = np.broadcast_arrays(
        *(np.asarray(x, dtype=np.float64) for x in (mu_a, mu_b, var_a, var_b, cov_ab)))
    var_sum = var_a + var_b
    mu_sq = mu_a * mu_a + mu_b * mu_b
    full = var_sum > TINY
    lum = mu_sq > TINY
    out = np.ones(var_sum.shape)
    both = full & lum
    # factored so that a == b gives exactly 1.0
    out[both] = (2.0 * cov_ab[both] / var_sum[both]) * (2.0 * mu_a[both] * mu_b[both] / mu_sq[both])
    # no structure left: luminance term only
    lum_only = ~full & lum
    out[lum_only] = 2.0 * mu_a[lum_only] * mu_b[lum_only] / mu_sq[lum_only]
    # structured but zero-mean windows: the product form is 0/0 there too
    struct_only = full & ~lum
    out[struct_only] = 2.0 * cov_ab[struct_only] / var_sum[struct_only]
    return out


def uiqi_window(a: np.ndarray, b: np.ndarray) -> float:
    """Universal image quality index of two equally sized gray windows."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError("windows differ in size")
    mu_a, mu_b = a.mean(), b.mean()
    da, db = a - mu_a, b - mu_b
    return float(q0_from_moments(mu_a, mu_b, (da * da).mean(), (db * db).mean(), (da * db).mean()))


def _window_moments(x: np.ndarray, y: np.ndarray, size: int, stride: int):
    """Means, variances and covariance for every window, two-pass per window."""
    wx = sliding_window_view(x, (size, size))[::stride, ::stride]
    wy = sliding_window_view(y, (size, size))[::stride, ::stride]
    mx = wx.mean(axis=(2, 3))
    my = wy.mean(axis=(2, 3))
    dx = wx - mx[:, :, None, None]
    dy = wy - my[:, :, None, None]
    return mx, my, (dx * dx).mean(axis=(2, 3)), (dy * dy).mean(axis=(2, 3)), (dx * dy).mean(axis=(2, 3))


def _qs_pair(a, b, f, size, stride, rows_per_chunk=64):
    """Sum of per-window Q_S terms plus the lambda map, processed in row bands."""
    h = a.shape[0]
    n_rows = (h - size) // stride + 1
    total = 0.0
    lambdas = []
    for r0 in range(0, n_rows, rows_per_chunk):
        r1 = min(n_rows, r0 + rows_per_chunk)
        y0 = r0 * stride
        y1 = (r1 - 1) * stride + size
        ab, bb, fb = a[y0:y1], b[y0:y1], f[y0:y1]
        mu_a, mu_f, var_a, var_f, cov_af = _window_moments(ab, fb, size, stride)
        mu_b, _, var_b, _, cov_bf = _window_moments(bb, fb, size, stride)
        q_af = q0_from_moments(mu_a, mu_f, var_a, var_f, cov_af)
        q_bf = q0_from_moments(mu_b, mu_f, var_b, var_f, cov_bf)
        sal = var_a + var_b
        lam = np.full(sal.shape, 0.5)
        ok = sal > TINY
        lam[ok] = var_a[ok] / sal[ok]
        total += float((lam * q_af + (1.0 - lam) * q_bf).sum())
        lambdas.append(lam)
    return total, np.concatenate(lambdas, axis=0)


def q_s(a: np.ndarray, b: np.ndarray, fused: np.ndarray, window: int = WINDOW,
        stride: int = STRIDE) -> QualityReport:
    """``Q_S`` of ``fused`` given two inputs ``a`` and ``b``."""
    ga, gb, gf = to_gray(a), to_gray(b), to_gray(fused)
    if not ga.shape == gb.shape == gf.shape:
        raise ValueError(f"size mismatch: {ga.shape}, {gb.shape}, {gf.shape}")
    if min(ga.shape) < window:
        raise ValueError(f"image {ga.shape} smaller than the {window}px window")
    total, lam = _qs_pair(ga, gb, gf, window, stride)
    n = lam.size
    return QualityReport(total / n, lam, window, stride, n, 1, (total / n,))


def q_s_stack(images, fused: np.ndarray, window: int = WINDOW, stride: int = STRIDE) -> QualityReport:
    """Mean ``Q_S`` over consecutive pairs ``(S_k, S_k+1)`` of an ordered stack."""
    images = list(getattr(images, "images", images))
    if len(images) < 2:
        raise ValueError("need at least two input images")
    reports = [q_s(a, b, fused, window, stride) for a, b in zip(images, images[1:])]
    scores = tuple(r.q_s for r in reports)
    lam = reports[0].lambdas if len(reports) == 1 else None
    return QualityReport(float(np.mean(scores)), lam, window, stride, reports[0].windows,
                         len(reports), scores)
