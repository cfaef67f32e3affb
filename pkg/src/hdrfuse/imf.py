"""Intensity mapping functions estimated by histogram specification."""
from __future__ import annotations

import numpy as np

from .imgio import as_image

LEVELS = 256


def levels_of(img: np.ndarray) -> np.ndarray:
    """Quantise samples to 0..255 using the same rule as 8-bit storage."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.intp)


def histograms(img: np.ndarray) -> np.ndarray:
    img = as_image(img)
    lv = levels_of(img)
    return np.stack([np.bincount(lv[:, :, c].ravel(), minlength=LEVELS) for c in range(img.shape[2])])


def estimate_imf(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-channel lookup tables of shape ``(C, 256)`` mapping source levels onto target.

    Each source level goes to the lowest target level whose cumulative
    histogram reaches the source's.  Only histograms are used, so the pair
    does not need to be registered.
    """
    source = as_image(source)
    target = as_image(target)
    if source.shape[2] != target.shape[2]:
        raise ValueError(f"channel mismatch: {source.shape[2]} vs {target.shape[2]}")
    hs = histograms(source)
    ht = histograms(target)
    ns = source.shape[0] * source.shape[1]
    nt = target.shape[0] * target.shape[1]
    tables = np.empty((source.shape[2], LEVELS))
    for c in range(source.shape[2]):
        # compare cdf_s / ns <= cdf_t / nt exactly in integers
        cs = np.cumsum(hs[c]) * nt
        ct = np.cumsum(ht[c]) * ns
        tables[c] = np.searchsorted(ct, cs, side="left") / 255.0
    return tables


def apply_imf(img: np.ndarray, curve: np.ndarray) -> np.ndarray:
    img = as_image(img)
    curve = np.asarray(curve, dtype=np.float64)
    if curve.shape != (img.shape[2], LEVELS):
        raise ValueError(f"curve shape {curve.shape} does not fit a {img.shape[2]}-channel image")
    lv = levels_of(img)
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        out[:, :, c] = curve[c][lv[:, :, c]]
    return np.clip(out, 0.0, 1.0)


def identity_curve(channels: int = 3) -> np.ndarray:
    return np.tile(np.arange(LEVELS) / 255.0, (channels, 1))


def histogram_emd(a: np.ndarray, b: np.ndarray) -> float:
    """1-D earth mover's distance between two images' level histograms, in ``[0, 1]`` units.

    Averaged over channels.
    """
    ha = histograms(a).astype(np.float64)
    hb = histograms(b).astype(np.float64)
    ca = np.cumsum(ha / ha.sum(1, keepdims=True), axis=1)
    cb = np.cumsum(hb / hb.sum(1, keepdims=True), axis=1)
    return float(np.abs(ca - cb).sum(1).mean() / 255.0)


def save_curve_csv(curve: np.ndarray, path) -> None:
    np.savetxt(path, np.asarray(curve), delimiter=",", fmt="%.6f")


def load_curve_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=","))
