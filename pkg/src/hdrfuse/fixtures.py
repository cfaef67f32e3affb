"""Synthetic exposure stacks with known ground truth.

A frame is ``clamp(gain * shift(scene) + noise)``, where the scene is the base
image with any moving objects pasted at their per-frame positions.  Shifting
by ``(dx, dy)`` samples the scene at ``(x + dx, y + dy)``, so the flow that
aligns frame ``k`` onto the reference is ``shift_ref - shift_k``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .flow import FlowField, warp
from .imgio import ExposureStack, as_image, save_flo, save_image


def textured_image(height: int, width: int, seed: int = 0, channels: int = 3,
                   lo: float = 0.2, hi: float = 0.8, scales=(1.5, 4.0, 10.0)) -> np.ndarray:
    """Smooth multi-scale random texture rescaled into ``[lo, hi]``."""
    rng = np.random.default_rng(seed)
    img = np.zeros((height, width, channels))
    for s in scales:
        noise = rng.standard_normal((height, width, channels))
        layer = ndimage.gaussian_filter(noise, sigma=(s, s, 0), mode="reflect")
        img += layer / (layer.std() + 1e-12)
    img -= img.min()
    img /= img.max() + 1e-12
    return lo + (hi - lo) * img


def checker_pattern(height: int, width: int, cell: int = 5, seed: int = 0,
                    lo: float = 0.05, hi: float = 0.95, channels: int = 3) -> np.ndarray:
    """High-contrast random block pattern, useful as a distinctive moving object."""
    rng = np.random.default_rng(seed)
    cells = rng.random(((height + cell - 1) // cell, (width + cell - 1) // cell)) > 0.5
    mask = np.kron(cells, np.ones((cell, cell)))[:height, :width]
    img = lo + (hi - lo) * mask
    tint = np.linspace(1.0, 0.85, channels)
    return np.clip(img[:, :, None] * tint[None, None, :], 0.0, 1.0)


@dataclass
class MovingObject:
    """Rectangle ``(x, y, w, h)`` displaced by ``displacements[k]`` in frame ``k``.

    ``pattern`` supplies the object's pixels; when omitted the base image's
    content under ``rect`` is used.
    """

    rect: tuple[int, int, int, int]
    displacements: list[tuple[int, int]]
    pattern: np.ndarray | None = None


@dataclass
class SynthSpec:
    base: np.ndarray
    gains: list[float]
    shifts: list[tuple[float, float]] | None = None
    moving_objects: list[MovingObject] = field(default_factory=list)
    noise_sigma: float = 0.0
    ref_index: int | None = None
    seed: int = 0

    def __post_init__(self):
        self.base = as_image(self.base)
        k = len(self.gains)
        if k < 2:
            raise ValueError("need at least two gains")
        if any(a > b for a, b in zip(self.gains, self.gains[1:])):
            raise ValueError(f"gains must be ascending, got {self.gains}")
        if self.shifts is None:
            self.shifts = [(0.0, 0.0)] * k
        if len(self.shifts) != k:
            raise ValueError(f"{len(self.shifts)} shifts for {k} frames")
        for obj in self.moving_objects:
            if len(obj.displacements) != k:
                raise ValueError(f"object {obj.rect} has {len(obj.displacements)} displacements for {k} frames")
        if self.ref_index is None:
            self.ref_index = k // 2
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def frame_count(self) -> int:
        return len(self.gains)


@dataclass
class GroundTruth:
    """Per-frame flow onto the reference grid and moving-object masks (frame coordinates)."""

    flows: list[FlowField]
    object_masks: list[np.ndarray]
    # static-scene frames before noise/clamp, useful for tests
    scenes: list[np.ndarray]


def _paste_objects(base: np.ndarray, spec: SynthSpec, k: int) -> tuple[np.ndarray, np.ndarray]:
    scene = base.copy()
    mask = np.zeros(base.shape[:2], dtype=bool)
    h, w = base.shape[:2]
    for obj in spec.moving_objects:
        x, y, ow, oh = obj.rect
        dx, dy = obj.displacements[k]
        nx, ny = x + dx, y + dy
        if min(x, y, nx, ny) < 0 or max(x, nx) + ow > w or max(y, ny) + oh > h:
            raise ValueError(f"object {obj.rect} displaced by {(dx, dy)} leaves the {w}x{h} frame")
        if obj.pattern is not None:
            content = as_image(obj.pattern)
            if content.shape[:2] != (oh, ow):
                raise ValueError(f"pattern shape {content.shape[:2]} does not match rect {(oh, ow)}")
            if content.shape[2] != base.shape[2]:
                content = np.repeat(content[:, :, :1], base.shape[2], axis=2)
        else:
            content = base[y:y + oh, x:x + ow]
        scene[ny:ny + oh, nx:nx + ow] = content
        mask[ny:ny + oh, nx:nx + ow] = True
    return scene, mask


def synthesize_stack(spec: SynthSpec) -> tuple[ExposureStack, GroundTruth]:
    rng = np.random.default_rng(spec.seed)
    frames, flows, masks, scenes = [], [], [], []
    rx, ry = spec.shifts[spec.ref_index]
    shape = spec.base.shape
    for k, gain in enumerate(spec.gains):
        scene, obj_mask = _paste_objects(spec.base, spec, k)
        dx, dy = spec.shifts[k]
        shift = FlowField.constant(shape, dx, dy)
        moved = warp(scene, shift)
        moved_mask = warp(obj_mask.astype(np.float64), shift)[:, :, 0] > 0.5
        frame = gain * moved
        if spec.noise_sigma > 0:
            frame = frame + rng.normal(0.0, spec.noise_sigma, size=frame.shape)
        frames.append(np.clip(frame, 0.0, 1.0))
        scenes.append(moved)
        flows.append(FlowField.constant(shape, rx - dx, ry - dy))
        masks.append(moved_mask)
    return ExposureStack(tuple(frames), spec.ref_index), GroundTruth(flows, masks, scenes)


def moving_square_spec(height: int = 256, width: int = 256, square: int = 40,
                       motion: int = 60, gains=(0.6, 1.0, 1.5), seed: int = 0,
                       noise_sigma: float = 0.0, value: float = 0.85,
                       pattern: np.ndarray | None = None, lo: float = 0.3, hi: float = 0.55,
                       scales=(1.0, 2.0, 4.0)) -> SynthSpec:
    """Static textured scene with one square moving horizontally.

    The square sits centred in the reference (middle) frame and is displaced
    by ``(k - ref) * motion`` pixels in frame ``k``.  By default it is a flat
    patch of ``value`` on a low-contrast, fine-grained texture; the fine
    scales keep the background above the flow's gradient-energy floor even
    in the darkest frame.
    """
    k = len(gains)
    ref = k // 2
    base = textured_image(height, width, seed=seed, lo=lo, hi=hi, scales=scales)
    x0 = (width - square) // 2
    y0 = (height - square) // 2
    disp = [((i - ref) * motion, 0) for i in range(k)]
    if pattern is None:
        pattern = np.full((square, square, base.shape[2]), value)
    obj = MovingObject((x0, y0, square, square), disp, pattern=pattern)
    return SynthSpec(base, list(gains), moving_objects=[obj], noise_sigma=noise_sigma,
                     ref_index=ref, seed=seed)


def object_template(stack: ExposureStack, obj: MovingObject, margin: int = 4) -> np.ndarray:
    """Crop of the reference around ``obj`` with ``margin`` pixels of background."""
    x, y, w, h = obj.rect
    dx, dy = obj.displacements[stack.ref_index]
    x, y = x + dx - margin, y + dy - margin
    H, W = stack.shape[:2]
    return stack.reference[max(0, y):min(H, y + h + 2 * margin), max(0, x):min(W, x + w + 2 * margin)]


def spec_from_dict(cfg: dict) -> SynthSpec:
    """Build a :class:`SynthSpec` from the JSON layout used by ``hdrfuse synth``."""
    from .imgio import load_image

    if "base" in cfg:
        base = load_image(cfg["base"])
    else:
        base = textured_image(int(cfg.get("height", 256)), int(cfg.get("width", 256)),
                              seed=int(cfg.get("texture_seed", 0)),
                              lo=float(cfg.get("texture_lo", 0.2)), hi=float(cfg.get("texture_hi", 0.8)))
    objects = []
    for i, o in enumerate(cfg.get("objects", [])):
        rect = tuple(int(v) for v in o["rect"])
        pattern = None
        if "pattern_seed" in o:
            pattern = checker_pattern(rect[3], rect[2], cell=int(o.get("cell", 5)),
                                      seed=int(o["pattern_seed"]), channels=base.shape[2])
        objects.append(MovingObject(rect, [tuple(int(d) for d in dd) for dd in o["displacements"]], pattern))
    shifts = cfg.get("shifts")
    if shifts is not None:
        shifts = [tuple(float(s) for s in sh) for sh in shifts]
    return SynthSpec(base, [float(g) for g in cfg["gains"]], shifts, objects,
                     float(cfg.get("noise_sigma", 0.0)), cfg.get("ref_index"), int(cfg.get("seed", 0)))


def write_stack(stack: ExposureStack, truth: GroundTruth, out_dir) -> list[Path]:
    """Write ``frame_k.png``, ``flow_k.flo`` and ``mask_k.png`` for every frame."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, (im, fl, m) in enumerate(zip(stack.images, truth.flows, truth.object_masks)):
        p = out / f"frame_{k}.png"
        save_image(im, p)
        save_flo(fl.u, fl.v, out / f"flow_{k}.flo")
        save_image(m.astype(np.float64), out / f"mask_{k}.png")
        paths.append(p)
    (out / "stack.json").write_text(json.dumps(
        {"frames": [p.name for p in paths], "ref_index": stack.ref_index}, indent=2))
    return paths


def count_template_matches(img: np.ndarray, template: np.ndarray, threshold: float = 0.8,
                           min_distance: int | None = None) -> int:
    """Number of separated normalised cross-correlation peaks at or above ``threshold``.

    Works on luma; peaks closer than ``min_distance`` (default half the template's
    short side) count once.
    """
    from skimage.feature import match_template, peak_local_max

    from .imgio import to_gray

    g = to_gray(img)
    t = to_gray(template)
    ncc = match_template(g, t)
    if min_distance is None:
        min_distance = max(1, min(t.shape) // 2)
    peaks = peak_local_max(ncc, min_distance=min_distance, threshold_abs=threshold, exclude_border=False)
    return len(peaks)
