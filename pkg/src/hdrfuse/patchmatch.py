"""Windowed PatchMatch correction of misaligned superpixels.

The nearest-neighbour field maps patches of the exposure-adjusted reference
(target) onto patches of the flow-warped input (source).  Voting the matched
source pixels back onto the target grid yields a region that follows the
reference's structure while keeping the input's exposure.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import ndimage

from .imgio import as_image
from .superpixel import SuperpixelMap


@dataclass(frozen=True)
class PatchParams:
    patch_size: int = 7
    iterations: int = 5
    seed: int = 0
    window_scale: float = 2.0

    def __post_init__(self):
        if self.patch_size < 3 or self.patch_size % 2 == 0:
            raise ValueError(f"patch_size must be odd and >= 3, got {self.patch_size}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.window_scale < 1:
            raise ValueError("window_scale must be >= 1")


@dataclass
class NNField:
    """Matches for every patch position of the target region.

    ``offsets[y, x] = (dx, dy)`` moves the target patch with top-left ``(x, y)``
    onto its source patch; ``costs`` is the SSD at that offset and
    ``cost_history[i]`` the per-position cost after ``i`` iterations
    (index 0 is the random initialisation).
    """

    region: tuple[int, int, int, int]
    offsets: np.ndarray
    costs: np.ndarray
    cost_history: np.ndarray
    patch_size: int

    @property
    def total_cost(self) -> float:
        return float(self.costs.sum())

    def source_positions(self) -> tuple[np.ndarray, np.ndarray]:
        ys, xs = np.indices(self.costs.shape)
        return ys + self.offsets[..., 1], xs + self.offsets[..., 0]


@njit(cache=True, nogil=True)
def _ssd(tgt, src, ty, tx, sy, sx, p, bound):
    total = 0.0
    nc = tgt.shape[2]
    for dy in range(p):
        for dx in range(p):
            for c in range(nc):
                d = tgt[ty + dy, tx + dx, c] - src[sy + dy, sx + dx, c]
                total += d * d
        if total >= bound:
            return total
    return total


@njit(cache=True, nogil=True)
def _init_costs(tgt, src, nnf_y, nnf_x, p, cost):
    for y in range(cost.shape[0]):
        for x in range(cost.shape[1]):
            cost[y, x] = _ssd(tgt, src, y, x, nnf_y[y, x], nnf_x[y, x], p, np.inf)


@njit(cache=True, nogil=True)
def _patchmatch(tgt, src, nnf_y, nnf_x, cost, rand, p, history):
    th, tw = cost.shape
    sh = src.shape[0] - p + 1
    sw = src.shape[1] - p + 1
    n_iter = rand.shape[0]
    n_rad = rand.shape[3]
    r_max = max(sh, sw)
    history[0, :, :] = cost
    for it in range(n_iter):
        forward = it % 2 == 0
        step = 1 if forward else -1
        for yy in range(th):
            y = yy if forward else th - 1 - yy
            for xx in range(tw):
                x = xx if forward else tw - 1 - xx
                by = nnf_y[y, x]
                bx = nnf_x[y, x]
                best = cost[y, x]
                # propagation from the already-visited horizontal and vertical neighbours
                px = x - step
                if 0 <= px < tw:
                    cy = nnf_y[y, px]
                    cx = nnf_x[y, px] + step
                    if 0 <= cx < sw:
                        d = _ssd(tgt, src, y, x, cy, cx, p, best)
                        if d < best:
                            best, by, bx = d, cy, cx
                py = y - step
                if 0 <= py < th:
                    cy = nnf_y[py, x] + step
                    cx = nnf_x[py, x]
                    if 0 <= cy < sh:
                        d = _ssd(tgt, src, y, x, cy, cx, p, best)
                        if d < best:
                            best, by, bx = d, cy, cx
                # random search with a halving radius around the current best
                r = r_max
                k = 0
                while r >= 1 and k < n_rad:
                    lo_y = max(by - r, 0)
                    hi_y = min(by + r, sh - 1)
                    lo_x = max(bx - r, 0)
                    hi_x = min(bx + r, sw - 1)
                    cy = lo_y + int(rand[it, y, x, k, 0] * (hi_y - lo_y + 1))
                    cx = lo_x + int(rand[it, y, x, k, 1] * (hi_x - lo_x + 1))
                    if cy > hi_y:
                        cy = hi_y
                    if cx > hi_x:
                        cx = hi_x
                    d = _ssd(tgt, src, y, x, cy, cx, p, best)
                    if d < best:
                        best, by, bx = d, cy, cx
                    r //= 2
                    k += 1
                nnf_y[y, x] = by
                nnf_x[y, x] = bx
                cost[y, x] = best
        history[it + 1, :, :] = cost


@njit(cache=True, nogil=True)
def _vote(src, nnf_y, nnf_x, p, out):
    acc = np.zeros(out.shape)
    cnt = np.zeros(out.shape[:2])
    for y in range(nnf_y.shape[0]):
        for x in range(nnf_y.shape[1]):
            sy = nnf_y[y, x]
            sx = nnf_x[y, x]
            for dy in range(p):
                for dx in range(p):
                    for c in range(out.shape[2]):
                        acc[y + dy, x + dx, c] += src[sy + dy, sx + dx, c]
                    cnt[y + dy, x + dx] += 1.0
    for y in range(out.shape[0]):
        for x in range(out.shape[1]):
            for c in range(out.shape[2]):
                out[y, x, c] = acc[y, x, c] / cnt[y, x]


def _n_radii(sh: int, sw: int) -> int:
    return int(np.floor(np.log2(max(sh, sw)))) + 1


def nnf_search(target: np.ndarray, source: np.ndarray, params: PatchParams | None = None,
               region: tuple[int, int, int, int] | None = None) -> NNField:
    """Randomised nearest-neighbour field from ``target`` patches into ``source``.

    Random initialisation, then ``params.iterations`` passes alternating
    forward and reverse scan order; each pass tries the two propagated
    candidates and a random search whose radius halves from the window size
    down to one pixel.  Costs are SSD over all patch pixels and channels and
    never increase for any position.
    """
    params = params or PatchParams()
    tgt = np.ascontiguousarray(as_image(target))
    src = np.ascontiguousarray(as_image(source))
    p = params.patch_size
    if min(tgt.shape[:2]) < p or min(src.shape[:2]) < p:
        raise ValueError(f"regions {tgt.shape[:2]} / {src.shape[:2]} smaller than patch {p}")
    if tgt.shape[2] != src.shape[2]:
        raise ValueError("target and source channel counts differ")
    th, tw = tgt.shape[0] - p + 1, tgt.shape[1] - p + 1
    sh, sw = src.shape[0] - p + 1, src.shape[1] - p + 1

    rng = np.random.default_rng(params.seed)
    nnf_y = rng.integers(0, sh, size=(th, tw)).astype(np.int64)
    nnf_x = rng.integers(0, sw, size=(th, tw)).astype(np.int64)
    rand = rng.random((params.iterations, th, tw, _n_radii(sh, sw), 2))

    cost = np.empty((th, tw))
    _init_costs(tgt, src, nnf_y, nnf_x, p, cost)
    history = np.empty((params.iterations + 1, th, tw))
    _patchmatch(tgt, src, nnf_y, nnf_x, cost, rand, p, history)

    ys, xs = np.indices((th, tw))
    offsets = np.stack([nnf_x - xs, nnf_y - ys], axis=-1)
    if region is None:
        region = (0, 0, tgt.shape[1], tgt.shape[0])
    return NNField(region, offsets, cost, history, p)


def reconstruct(source: np.ndarray, nnf: NNField, shape: tuple[int, ...]) -> np.ndarray:
    """Average every matched source patch's pixels onto the target grid."""
    src = np.ascontiguousarray(as_image(source))
    sy, sx = nnf.source_positions()
    out = np.empty(shape[:2] + (src.shape[2],))
    _vote(src, np.ascontiguousarray(sy), np.ascontiguousarray(sx), nnf.patch_size, out)
    return out


def search_window(sp: SuperpixelMap, label: int, scale: float = 2.0) -> tuple[int, int, int, int]:
    """``scale``-times-bbox rectangle centred on the label, clipped to the image, as (x0, y0, w, h)."""
    x0, y0, w, h = (int(v) for v in sp.bboxes[label])
    cx = x0 + w / 2.0
    cy = y0 + h / 2.0
    ww = scale * w
    hh = scale * h
    H, W = sp.shape
    wx0 = max(0, int(np.floor(cx - ww / 2.0)))
    wy0 = max(0, int(np.floor(cy - hh / 2.0)))
    wx1 = min(W, int(np.ceil(cx + ww / 2.0)))
    wy1 = min(H, int(np.ceil(cy + hh / 2.0)))
    return wx0, wy0, wx1 - wx0, wy1 - wy0


def correct_superpixel(warped: np.ndarray, latent_ref: np.ndarray, sp: SuperpixelMap,
                       label: int, params: PatchParams | None = None) -> np.ndarray:
    """Return ``warped`` with the pixels of ``label`` re-synthesised by PatchMatch.

    Pixels outside the label are returned untouched.  When the clipped search
    window cannot hold a single patch the label is filled from ``latent_ref``.
    """
    params = params or PatchParams()
    warped = as_image(warped)
    latent_ref = as_image(latent_ref)
    if warped.shape != latent_ref.shape or warped.shape[:2] != sp.shape:
        raise ValueError("warped, latent_ref and superpixel map must share one size")
    out = warped.copy()
    mask = sp.labels == label
    out[mask] = _resynthesize(warped, latent_ref, sp, label, params)[mask]
    return out


def _resynthesize(warped, latent_ref, sp, label, params) -> np.ndarray:
    """Full-image buffer whose window around ``label`` holds the reconstruction."""
    x0, y0, w, h = search_window(sp, label, params.window_scale)
    buf = latent_ref.copy()
    if min(w, h) < params.patch_size:
        return buf
    tgt = latent_ref[y0:y0 + h, x0:x0 + w]
    src = warped[y0:y0 + h, x0:x0 + w]
    nnf = nnf_search(tgt, src, params, region=(x0, y0, w, h))
    buf[y0:y0 + h, x0:x0 + w] = reconstruct(src, nnf, tgt.shape)
    return buf


def label_seed(seed: int, input_index: int, label: int) -> int:
    """Independent, schedule-free seed for one (input, label) correction."""
    ss = np.random.SeedSequence([seed, input_index, label])
    return int(ss.generate_state(1)[0])


def feather_alpha(mask: np.ndarray, width: int = 2) -> np.ndarray:
    """Blend weight ramping linearly from the mask boundary to 1 over ``width`` pixels inside."""
    if width <= 0:
        return mask.astype(np.float64)
    dist = ndimage.distance_transform_edt(mask)
    return np.clip(dist / (width + 1), 0.0, 1.0)


def correct_flagged(warped: np.ndarray, latent_ref: np.ndarray, sp: SuperpixelMap,
                    labels, params: PatchParams | None = None, input_index: int = 0,
                    feather: int = 2) -> np.ndarray:
    """Correct every label in ``labels`` and optionally feather the seam.

    Each label reads only the unmodified ``warped`` / ``latent_ref`` and
    writes only its own pixels, so the result is independent of order.
    ``feather=0`` leaves every pixel outside the labels bit-identical.
    """
    params = params or PatchParams()
    warped = as_image(warped)
    latent_ref = as_image(latent_ref)
    corrected = warped.copy()
    union = np.zeros(sp.shape, dtype=bool)
    for label in sorted(int(l) for l in labels):
        p = PatchParams(params.patch_size, params.iterations,
                        label_seed(params.seed, input_index, label), params.window_scale)
        mask = sp.labels == label
        corrected[mask] = _resynthesize(warped, latent_ref, sp, label, p)[mask]
        union |= mask
    if feather <= 0 or not union.any():
        return corrected
    alpha = feather_alpha(union, feather)[:, :, None]
    return alpha * corrected + (1.0 - alpha) * warped
