"""Coarse-to-fine dense inverse search optical flow and bilinear warping.

Convention: a flow ``(u, v)`` computed for ``(moving, fixed)`` satisfies
``moving(x + u, y + v) ~= fixed(x, y)``, so ``warp(moving, flow)`` lands
``moving`` on the grid of ``fixed``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .fusion import reduce
from .imgio import as_image, to_gray


@dataclass
class FlowParams:
    patch_size: int = 8
    stride: int = 4
    max_iters: int = 12
    min_update: float = 0.01
    min_coarse_size: int = 32
    min_grad_energy: float = 1e-4
    max_displacement: float = 64.0
    # forward+backward neighbour propagation sweeps before and after descent
    propagation_passes: int = 1
    # per-pixel densification weight is exp(-|residual| * residual_scale)
    residual_scale: float = 255.0

    def __post_init__(self):
        if self.patch_size < 2 or self.stride < 1 or self.stride > self.patch_size:
            raise ValueError(f"bad patch geometry: size={self.patch_size} stride={self.stride}")
        if self.max_iters < 1 or self.max_displacement <= 0:
            raise ValueError("max_iters and max_displacement must be positive")


@dataclass
class FlowField:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise ValueError(f"u {self.u.shape} and v {self.v.shape} must be matching 2-D arrays")

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    @classmethod
    def zeros(cls, shape) -> "FlowField":
        return cls(np.zeros(shape[:2]), np.zeros(shape[:2]))

    @classmethod
    def constant(cls, shape, u: float, v: float) -> "FlowField":
        return cls(np.full(shape[:2], float(u)), np.full(shape[:2], float(v)))

    def endpoint_error(self, other: "FlowField") -> np.ndarray:
        return np.hypot(self.u - other.u, self.v - other.v)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.u).all() and np.isfinite(self.v).all())


def bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample ``img`` (H, W[, C]) at float coordinates, clamping to the border."""
    h, w = img.shape[:2]
    xs = np.clip(xs, 0.0, w - 1)
    ys = np.clip(ys, 0.0, h - 1)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def warp(img: np.ndarray, flow: FlowField) -> np.ndarray:
    """Resample ``img`` at ``(x + u, y + v)`` for every output pixel."""
    img = as_image(img)
    if img.shape[:2] != flow.shape:
        raise ValueError(f"image {img.shape[:2]} and flow {flow.shape} differ in size")
    ys, xs = np.indices(flow.shape, dtype=np.float64)
    return bilinear_sample(img, xs + flow.u, ys + flow.v)


def _upsample(field: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    # coarse pixel i sits at fine pixel 2i (decimation keeps even samples)
    ys, xs = np.indices(shape, dtype=np.float64)
    return bilinear_sample(field, xs / 2.0, ys / 2.0) * 2.0


def _grid(n: int, p: int, stride: int) -> np.ndarray:
    starts = list(range(0, n - p + 1, stride))
    if starts[-1] != n - p:
        starts.append(n - p)
    return np.array(starts)


def n_levels(shape, params: FlowParams) -> int:
    short = min(shape[:2])
    if short < params.min_coarse_size * 2:
        return 1
    return 1 + int(math.floor(math.log2(short / params.min_coarse_size)))


@njit(cache=True, nogil=True)
def _sample(img, x, y):
    h, w = img.shape
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    x0 = int(np.floor(x))
    y0 = int(np.floor(y))
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


@njit(cache=True, nogil=True)
def _ssd_at(mov, fix, ty, tx, p, u, v):
    total = 0.0
    for dy in range(p):
        for dx in range(p):
            d = _sample(mov, tx + dx + u, ty + dy + v) - fix[ty + dy, tx + dx]
            total += d * d
    return total


@njit(cache=True, nogil=True)
def _sweep(mov, fix, ys, xs, p, pu, pv, forward):
    """One raster pass in which each patch may adopt the displacement of the
    previously visited horizontal or vertical neighbour."""
    ny = ys.shape[0]
    nx = xs.shape[0]
    step = 1 if forward else -1
    for jj in range(ny):
        j = jj if forward else ny - 1 - jj
        for ii in range(nx):
            i = ii if forward else nx - 1 - ii
            best = _ssd_at(mov, fix, ys[j], xs[i], p, pu[j, i], pv[j, i])
            ni = i - step
            if 0 <= ni < nx:
                c = _ssd_at(mov, fix, ys[j], xs[i], p, pu[j, ni], pv[j, ni])
                if c < best:
                    best = c
                    pu[j, i] = pu[j, ni]
                    pv[j, i] = pv[j, ni]
            nj = j - step
            if 0 <= nj < ny:
                c = _ssd_at(mov, fix, ys[j], xs[i], p, pu[nj, i], pv[nj, i])
                if c < best:
                    best = c
                    pu[j, i] = pu[nj, i]
                    pv[j, i] = pv[nj, i]


def _propagate(mov, fix, ys, xs, p, pu, pv, passes):
    """Forward then backward neighbour propagation, repeated ``passes`` times."""
    gu = np.ascontiguousarray(pu.reshape(len(ys), len(xs)))
    gv = np.ascontiguousarray(pv.reshape(len(ys), len(xs)))
    for _ in range(passes):
        _sweep(mov, fix, ys, xs, p, gu, gv, True)
        _sweep(mov, fix, ys, xs, p, gu, gv, False)
    return gu.ravel(), gv.ravel()


def _refine_level(mov: np.ndarray, fix: np.ndarray, u0: np.ndarray, v0: np.ndarray,
                  params: FlowParams) -> tuple[np.ndarray, np.ndarray]:
    h, w = fix.shape
    p = params.patch_size
    gy_starts, gx_starts = _grid(h, p, params.stride), _grid(w, p, params.stride)
    mov = np.ascontiguousarray(mov)
    fix = np.ascontiguousarray(fix)
    ty, tx = np.meshgrid(gy_starts, gx_starts, indexing="ij")
    ty, tx = ty.ravel(), tx.ravel()
    oy, ox = np.meshgrid(np.arange(p), np.arange(p), indexing="ij")
    py = ty[:, None] + oy.ravel()[None, :]  # (n_patches, p*p)
    px = tx[:, None] + ox.ravel()[None, :]

    gy, gx = np.gradient(fix)
    tmpl = fix[py, px]
    tgx = gx[py, px]
    tgy = gy[py, px]
    hxx = (tgx * tgx).sum(1)
    hxy = (tgx * tgy).sum(1)
    hyy = (tgy * tgy).sum(1)
    det = hxx * hyy - hxy * hxy
    energy = (hxx + hyy) / (p * p)
    valid = (energy >= params.min_grad_energy) & (det > 1e-12 * (hxx + hyy) ** 2)

    cy = ty + (p - 1) / 2.0
    cx = tx + (p - 1) / 2.0
    init_u = bilinear_sample(u0, cx, cy)
    init_v = bilinear_sample(v0, cx, cy)
    pu, pv = _propagate(mov, fix, gy_starts, gx_starts, p, init_u, init_v, params.propagation_passes)
    start_u, start_v = pu.copy(), pv.copy()

    active = valid.copy()
    for _ in range(params.max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        warped = bilinear_sample(mov, px[idx] + pu[idx, None], py[idx] + pv[idx, None])
        err = warped - tmpl[idx]
        bx = (tgx[idx] * err).sum(1)
        by = (tgy[idx] * err).sum(1)
        d = det[idx]
        du = (hyy[idx] * bx - hxy[idx] * by) / d
        dv = (hxx[idx] * by - hxy[idx] * bx) / d
        pu[idx] -= du
        pv[idx] -= dv
        active[idx[np.hypot(du, dv) < params.min_update]] = False

    # patches that drifted further than their own size are treated as failed
    drift = np.hypot(pu - start_u, pv - start_v)
    bad = drift > p
    pu[bad] = start_u[bad]
    pv[bad] = start_v[bad]
    pu, pv = _propagate(mov, fix, gy_starts, gx_starts, p, pu, pv, params.propagation_passes)

    # flat patches skip descent but still vote with their propagated hypothesis
    vidx = np.arange(len(pu))
    u = u0.copy()
    v = v0.copy()
    if vidx.size:
        warped = bilinear_sample(mov, px[vidx] + pu[vidx, None], py[vidx] + pv[vidx, None])
        resid = np.abs(warped - tmpl[vidx]) * params.residual_scale
        # shift by the per-pixel minimum so the exponent cannot underflow to 0/0
        flat = (py[vidx] * w + px[vidx]).ravel()
        rmin = np.full(h * w, np.inf)
        np.minimum.at(rmin, flat, resid.ravel())
        wts = np.exp(-(resid.ravel() - rmin[flat]))
        wsum = np.bincount(flat, weights=wts, minlength=h * w)
        su = np.bincount(flat, weights=wts * np.repeat(pu[vidx], p * p), minlength=h * w)
        sv = np.bincount(flat, weights=wts * np.repeat(pv[vidx], p * p), minlength=h * w)
        covered = wsum > 0
        u.ravel()[covered] = su[covered] / wsum[covered]
        v.ravel()[covered] = sv[covered] / wsum[covered]
    return u, v


def compute_flow(moving: np.ndarray, fixed: np.ndarray, params: FlowParams | None = None) -> FlowField:
    """Dense flow from ``fixed``'s grid into ``moving``.

    Both images are reduced to luma.  Overlapping patches are registered by
    inverse-compositional Gauss-Newton on a scale-2 pyramid whose coarsest
    level keeps at least ``min_coarse_size`` pixels on the short side.  Raster
    sweeps let each patch adopt a neighbour's displacement when it fits
    better, which repairs coarse-level errors around moving objects.  Patch
    displacements are densified with residual-based weights.
    """
    params = params or FlowParams()
    moving = as_image(moving)
    fixed = as_image(fixed)
    if moving.shape[:2] != fixed.shape[:2]:
        raise ValueError(f"moving {moving.shape[:2]} and fixed {fixed.shape[:2]} differ in size")
    if min(fixed.shape[:2]) < params.patch_size:
        raise ValueError(f"image {fixed.shape[:2]} smaller than the {params.patch_size}px flow patch")

    levels = n_levels(fixed.shape, params)
    mov_pyr = [to_gray(moving)]
    fix_pyr = [to_gray(fixed)]
    for _ in range(levels - 1):
        mov_pyr.append(reduce(mov_pyr[-1]))
        fix_pyr.append(reduce(fix_pyr[-1]))

    u = np.zeros(fix_pyr[-1].shape)
    v = np.zeros(fix_pyr[-1].shape)
    for lvl in range(levels - 1, -1, -1):
        shape = fix_pyr[lvl].shape
        if u.shape != shape:
            u = _upsample(u, shape)
            v = _upsample(v, shape)
        u, v = _refine_level(mov_pyr[lvl], fix_pyr[lvl], u, v, params)

    lim = params.max_displacement
    return FlowField(np.clip(u, -lim, lim), np.clip(v, -lim, lim))
