"""SLIC superpixels in CIELAB with a connectivity post-pass."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage import color, measure

from .imgio import as_image


@dataclass
class SuperpixelMap:
    labels: np.ndarray  # (H, W) int, values 0..count-1

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.count = int(self.labels.max()) + 1
        self.sizes = np.bincount(self.labels.ravel(), minlength=self.count)
        if (self.sizes == 0).any():
            raise ValueError("superpixel labels must be contiguous 0..L-1")
        boxes = ndimage.find_objects(self.labels + 1)
        # (x0, y0, w, h)
        self.bboxes = np.array([(s[1].start, s[0].start, s[1].stop - s[1].start, s[0].stop - s[0].start)
                                for s in boxes], dtype=np.int64)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def mask(self, label: int) -> np.ndarray:
        return self.labels == label

    def boundaries(self) -> np.ndarray:
        lab = self.labels
        edge = np.zeros(lab.shape, dtype=bool)
        edge[:, 1:] |= lab[:, 1:] != lab[:, :-1]
        edge[1:, :] |= lab[1:, :] != lab[:-1, :]
        return edge

    def overlay(self, img: np.ndarray, rgb=(1.0, 0.0, 0.0)) -> np.ndarray:
        out = as_image(img)
        if out.shape[2] == 1:
            out = np.repeat(out, 3, axis=2)
        out = out.copy()
        out[self.boundaries()] = rgb
        return out


def _to_lab(img: np.ndarray) -> np.ndarray:
    img = as_image(img)
    if img.shape[2] == 1:
        img = np.repeat(img, 3, axis=2)
    return color.rgb2lab(np.clip(img, 0.0, 1.0))


def _seed_grid(h: int, w: int, n: int) -> np.ndarray:
    """Exactly ``n`` seeds: rows chosen from the aspect ratio, seeds spread evenly per row."""
    rows = min(n, max(1, int(round(math.sqrt(n * h / w)))))
    per_row = [n // rows + (1 if r < n % rows else 0) for r in range(rows)]
    seeds = []
    for r, cnt in enumerate(per_row):
        y = (r + 0.5) * h / rows
        for c in range(cnt):
            seeds.append(((c + 0.5) * w / cnt, y))
    return np.array(seeds)


def _perturb(seeds: np.ndarray, lab: np.ndarray) -> np.ndarray:
    """Move each seed to the lowest-gradient pixel in its 3x3 neighbourhood."""
    h, w = lab.shape[:2]
    gy = np.zeros((h, w))
    gx = np.zeros((h, w))
    gy[1:-1] = ((lab[2:] - lab[:-2]) ** 2).sum(-1)
    gx[:, 1:-1] = ((lab[:, 2:] - lab[:, :-2]) ** 2).sum(-1)
    grad = gx + gy
    out = seeds.copy()
    for i, (x, y) in enumerate(seeds):
        xi, yi = int(x), int(y)
        y0, y1 = max(yi - 1, 0), min(yi + 2, h)
        x0, x1 = max(xi - 1, 0), min(xi + 2, w)
        win = grad[y0:y1, x0:x1]
        # strict improvement only, so flat neighbourhoods keep the grid position
        if win.min() < grad[yi, xi]:
            dy, dx = np.unravel_index(np.argmin(win), win.shape)
            out[i] = (x0 + dx, y0 + dy)
    return out


def _enforce_connectivity(labels: np.ndarray, min_size: int) -> np.ndarray:
    comp = measure.label(labels, background=-1, connectivity=1) - 1
    n = int(comp.max()) + 1
    sizes = np.bincount(comp.ravel(), minlength=n).astype(np.int64)

    pairs = np.concatenate([
        np.stack([comp[:, 1:].ravel(), comp[:, :-1].ravel()], 1),
        np.stack([comp[1:, :].ravel(), comp[:-1, :].ravel()], 1),
    ])
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    pairs = np.unique(np.sort(pairs, axis=1), axis=0)
    adj: list[set[int]] = [set() for _ in range(n)]
    for a, b in pairs:
        adj[a].add(b)
        adj[b].add(a)

    owner = np.zeros(n, dtype=np.int64)
    owner[comp.ravel()] = labels.ravel()
    main = {}
    for c in np.argsort(-sizes, kind="stable"):
        main.setdefault(int(owner[c]), int(c))
    is_main = np.zeros(n, dtype=bool)
    is_main[list(main.values())] = True

    parent = np.arange(n)

    def find(c):
        while parent[c] != c:
            parent[c] = parent[parent[c]]
            c = parent[c]
        return c

    # Orphans (pieces cut off from their label's largest component) and any
    # label still below min_size join the largest adjacent group.
    group_size = sizes.copy()
    for c in np.argsort(sizes, kind="stable"):
        c = int(c)
        if is_main[c] and group_size[c] >= min_size:
            continue
        neighbours = {find(a) for a in adj[c]} - {c}
        if not neighbours:
            continue
        target = max(neighbours, key=lambda r: (group_size[r], -r))
        parent[c] = target
        group_size[target] += group_size[c]
        adj[target] |= adj[c]

    roots = np.array([find(c) for c in range(n)])
    _, relabel = np.unique(roots, return_inverse=True)
    return relabel[comp]


def slic_segment(img: np.ndarray, n_superpixels: int, compactness: float = 10.0,
                 iterations: int = 10, perturb_seeds: bool = True) -> SuperpixelMap:
    """Segment ``img`` into roughly ``n_superpixels`` compact, connected regions.

    Distance is ``sqrt(d_lab**2 + (m / S)**2 * d_xy**2)`` with grid step
    ``S = sqrt(H * W / n)``; each centre searches a ``2S x 2S`` window.
    """
    img = as_image(img)
    h, w = img.shape[:2]
    if n_superpixels < 1 or n_superpixels > h * w:
        raise ValueError(f"n_superpixels must be in 1..{h * w}, got {n_superpixels}")
    if n_superpixels == 1:
        return SuperpixelMap(np.zeros((h, w), dtype=np.int64))

    lab = _to_lab(img)
    step = math.sqrt(h * w / n_superpixels)
    seeds = _seed_grid(h, w, n_superpixels)
    if perturb_seeds:
        seeds = _perturb(seeds, lab)
    k = len(seeds)
    centers = np.empty((k, 5))
    centers[:, 0] = seeds[:, 0]
    centers[:, 1] = seeds[:, 1]
    centers[:, 2:] = lab[np.clip(seeds[:, 1].astype(int), 0, h - 1), np.clip(seeds[:, 0].astype(int), 0, w - 1)]

    spatial = (compactness / step) ** 2
    r = int(math.ceil(step))
    labels = np.zeros((h, w), dtype=np.int64)
    ys_all, xs_all = np.indices((h, w), dtype=np.float64)
    for _ in range(iterations):
        dist = np.full((h, w), np.inf)
        for i in range(k):
            cx, cy = centers[i, 0], centers[i, 1]
            y0, y1 = max(int(cy) - r, 0), min(int(cy) + r + 1, h)
            x0, x1 = max(int(cx) - r, 0), min(int(cx) + r + 1, w)
            d_lab = ((lab[y0:y1, x0:x1] - centers[i, 2:]) ** 2).sum(-1)
            d_xy = (xs_all[y0:y1, x0:x1] - cx) ** 2 + (ys_all[y0:y1, x0:x1] - cy) ** 2
            d = d_lab + spatial * d_xy
            region = dist[y0:y1, x0:x1]
            better = d < region
            region[better] = d[better]
            labels[y0:y1, x0:x1][better] = i
        # any pixel outside every window joins its nearest centre spatially
        lost = ~np.isfinite(dist)
        if lost.any():
            ly, lx = np.nonzero(lost)
            d2 = (lx[:, None] - centers[None, :, 0]) ** 2 + (ly[:, None] - centers[None, :, 1]) ** 2
            labels[ly, lx] = np.argmin(d2, axis=1)
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=k)
        keep = counts > 0
        feats = np.concatenate([xs_all.reshape(-1, 1), ys_all.reshape(-1, 1), lab.reshape(-1, 3)], 1)
        sums = np.stack([np.bincount(flat, weights=feats[:, j], minlength=k) for j in range(5)], 1)
        centers[keep] = sums[keep] / counts[keep, None]

    min_size = max(1, int(step * step / 4))
    return SuperpixelMap(_enforce_connectivity(labels, min_size))
