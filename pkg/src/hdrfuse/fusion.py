"""Exposure fusion with contrast/saturation/exposedness weights and Laplacian pyramids.

Pyramids halve with ``ceil`` so odd dimensions survive, the 5-tap binomial
kernel is applied with symmetric borders in both directions, and everything
stays in float until the single clamp at the end.
"""
from __future__ import annotations

import logging
import math

import numpy as np
from scipy import ndimage

from .imgio import ExposureStack, as_image, to_gray

log = logging.getLogger(__name__)

KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
EPS = 1e-12
SIGMA_EXPOSEDNESS = 0.2

_LAPLACE_3x3 = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


def _blur(img: np.ndarray, gain: float = 1.0) -> np.ndarray:
    k = KERNEL * gain
    out = ndimage.correlate1d(img, k, axis=0, mode="reflect")
    return ndimage.correlate1d(out, k, axis=1, mode="reflect")


def reduce(img: np.ndarray) -> np.ndarray:
    """Blur then keep every other row/column; an ``n``-pixel axis becomes ``ceil(n / 2)``."""
    return _blur(img)[::2, ::2]


def expand(img: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Zero-stuff ``img`` onto a grid of ``shape[:2]`` and interpolate with the same kernel."""
    h, w = shape[:2]
    if img.shape[0] != (h + 1) // 2 or img.shape[1] != (w + 1) // 2:
        raise ValueError(f"cannot expand {img.shape[:2]} to {(h, w)}")
    up = np.zeros((h, w) + img.shape[2:], dtype=np.float64)
    up[::2, ::2] = img
    return _blur(up, gain=2.0)


def max_depth(shape: tuple[int, ...]) -> int:
    """Largest number of levels before the short side reaches one pixel."""
    return int(math.floor(math.log2(min(shape[:2])))) + 1


def default_depth(shape: tuple[int, ...]) -> int:
    return max(1, int(math.floor(math.log2(min(shape[:2])))) - 1)


def _check_depth(shape, depth: int) -> None:
    if depth < 1 or depth > max_depth(shape):
        raise ValueError(f"pyramid depth {depth} infeasible for image of shape {shape[:2]} "
                         f"(allowed 1..{max_depth(shape)})")


def gaussian_pyramid(img: np.ndarray, depth: int) -> list[np.ndarray]:
    _check_depth(img.shape, depth)
    levels = [np.asarray(img, dtype=np.float64)]
    for _ in range(depth - 1):
        levels.append(reduce(levels[-1]))
    return levels


def laplacian_pyramid(img: np.ndarray, depth: int) -> list[np.ndarray]:
    gauss = gaussian_pyramid(img, depth)
    levels = [g - expand(g_next, g.shape) for g, g_next in zip(gauss, gauss[1:])]
    levels.append(gauss[-1])
    return levels


def collapse(levels: list[np.ndarray]) -> np.ndarray:
    out = levels[-1]
    for lap in reversed(levels[:-1]):
        out = lap + expand(out, lap.shape)
    return out


def contrast(img: np.ndarray) -> np.ndarray:
    """Absolute discrete Laplacian of the luma channel."""
    return np.abs(ndimage.correlate(to_gray(img), _LAPLACE_3x3, mode="reflect"))


def saturation(img: np.ndarray) -> np.ndarray:
    """Population standard deviation across colour channels (zero for gray images)."""
    img = as_image(img)
    return img.std(axis=2)


def exposedness(img: np.ndarray, sigma: float = SIGMA_EXPOSEDNESS) -> np.ndarray:
    img = as_image(img)
    return np.exp(-((img - 0.5) ** 2).sum(axis=2) / (2.0 * sigma ** 2))


def compute_weights(images) -> np.ndarray:
    """Per-pixel fusion weights of shape ``(K, H, W)`` that sum to one over ``K``.

    Accepts an :class:`ExposureStack` or any sequence of images, so single
    images and pre-aligned lists can be weighted too.
    """
    if isinstance(images, ExposureStack):
        images = images.images
    raw = np.stack([
        (contrast(im) + EPS) * (saturation(im) + EPS) * (exposedness(im) + EPS)
        for im in images
    ])
    return raw / raw.sum(axis=0, keepdims=True)


def fuse(images, weights: np.ndarray, depth: int | None = None) -> np.ndarray:
    """Blend Laplacian pyramids of ``images`` with Gaussian pyramids of ``weights``.

    Parameters
    ----------
    images : ExposureStack or sequence of (H, W, C) arrays
    weights : array (K, H, W)
        Normalised weights, e.g. from :func:`compute_weights`.
    depth : int, optional
        Number of pyramid levels. Defaults to ``floor(log2(min(H, W))) - 1``.

    Returns
    -------
    (H, W, C) array clamped to ``[0, 1]``.
    """
    if isinstance(images, ExposureStack):
        images = images.images
    images = [as_image(im) for im in images]
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(images),) + images[0].shape[:2]:
        raise ValueError(f"weights shape {weights.shape} does not match {len(images)} images "
                         f"of size {images[0].shape[:2]}")
    if depth is None:
        depth = default_depth(images[0].shape)
    _check_depth(images[0].shape, depth)

    blended = None
    for im, w in zip(images, weights):
        lap = laplacian_pyramid(im, depth)
        gw = gaussian_pyramid(w, depth)
        terms = [l * g[:, :, None] for l, g in zip(lap, gw)]
        blended = terms if blended is None else [b + t for b, t in zip(blended, terms)]
    out = collapse(blended)
    lo, hi = float(out.min()), float(out.max())
    if lo < 0.0 or hi > 1.0:
        log.debug("fusion overshoot before clamp: min %.4g max %.4g", lo, hi)
    return np.clip(out, 0.0, 1.0)


def exposure_fusion(images, depth: int | None = None) -> np.ndarray:
    """Weights plus fusion in one call."""
    return fuse(images, compute_weights(images), depth)
