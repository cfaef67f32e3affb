"""End-to-end deghosting: segment, re-expose, flow-align, detect, correct, fuse."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import fusion
from .error_detect import ErrorMask, FlowStats, Thresholds, detect_errors, flow_variance
from .flow import FlowField, FlowParams, compute_flow, warp
from .imf import apply_imf, estimate_imf, save_curve_csv
from .imgio import ExposureStack, save_flo, save_image, save_pgm16
from .patchmatch import PatchParams, correct_flagged
from .superpixel import SuperpixelMap, slic_segment

log = logging.getLogger(__name__)

REFERENCE_AREA = 1500 * 1000
STAGES = ("segmentation", "imf", "flow", "detection", "patchmatch", "fusion")


def scale_n_superpixels(width: int, height: int, base: int = 580) -> int:
    """Superpixel count scaled by image area relative to 1500x1000."""
    if width <= 0 or height <= 0:
        raise ValueError(f"bad image size {width}x{height}")
    n = int(np.floor(base * (width * height) / REFERENCE_AREA + 0.5))
    n = max(16, n)
    return max(1, min(n, (width * height) // 64))


@dataclass
class PipelineConfig:
    """Flat pipeline settings; ``None`` means derive from the image."""

    n_superpixels: int | None = None
    n_superpixels_base: int = 580
    compactness: float = 10.0
    slic_iterations: int = 10
    t_flow_u: float = 3.5
    t_flow_o: float = 1.5
    patch_size: int = 7
    pm_iterations: int = 5
    window_scale: float = 2.0
    flow_patch_size: int = 8
    flow_stride: int = 4
    flow_max_iters: int = 12
    flow_min_update: float = 0.01
    flow_max_displacement: float = 64.0
    fusion_depth: int | None = None
    seed: int = 0
    feather: int = 2
    threads: int = 1

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if f.name in ("seed", "feather"):
                if value < 0:
                    raise ValueError(f"{f.name} must be >= 0, got {value}")
            elif value <= 0:
                raise ValueError(f"{f.name} must be positive, got {value}")

    @property
    def thresholds(self) -> Thresholds:
        return Thresholds(self.t_flow_u, self.t_flow_o)

    @property
    def patch_params(self) -> PatchParams:
        return PatchParams(self.patch_size, self.pm_iterations, self.seed, self.window_scale)

    @property
    def flow_params(self) -> FlowParams:
        return FlowParams(patch_size=self.flow_patch_size, stride=self.flow_stride,
                          max_iters=self.flow_max_iters, min_update=self.flow_min_update,
                          max_displacement=self.flow_max_displacement)

    def superpixels_for(self, shape) -> int:
        if self.n_superpixels is not None:
            return self.n_superpixels
        return scale_n_superpixels(shape[1], shape[0], self.n_superpixels_base)

    def updated(self, **overrides) -> "PipelineConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return PipelineConfig(**values)


def _coerce(name: str, raw: str):
    ftype = {f.name: f.type for f in fields(PipelineConfig)}[name]
    raw = raw.strip()
    if raw.lower() in ("auto", "none", ""):
        if "None" not in str(ftype):
            raise ValueError(f"{name} cannot be auto")
        return None
    if "int" in str(ftype):
        return int(raw)
    return float(raw)


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines (``#`` starts a comment) into config overrides."""
    known = {f.name for f in fields(PipelineConfig)}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        try:
            out[key] = _coerce(key, value)
        except ValueError as exc:
            raise ValueError(f"config line {lineno}: bad value for {key}: {value!r}") from exc
    return out


def load_config(path) -> PipelineConfig:
    return PipelineConfig(**parse_config(Path(path).read_text(encoding="utf-8")))


class PipelineError(RuntimeError):
    def __init__(self, stage: str, input_index: int | None, cause: Exception):
        where = f"stage {stage!r}" + ("" if input_index is None else f", input {input_index}")
        super().__init__(f"{where}: {cause}")
        self.stage = stage
        self.input_index = input_index


@dataclass
class InputAlignment:
    index: int
    curve: np.ndarray
    latent: np.ndarray
    flow: FlowField
    warped: np.ndarray
    stats: FlowStats
    mask: ErrorMask
    aligned: np.ndarray
    timing: dict[str, float] = field(default_factory=dict)


@dataclass
class PipelineResult:
    aligned: tuple[np.ndarray, ...]
    ref_index: int
    superpixels: SuperpixelMap
    inputs: dict[int, InputAlignment]
    timing: dict[str, float]
    fused: np.ndarray | None = None
    weights: np.ndarray | None = None

    @property
    def aligned_stack(self) -> ExposureStack:
        return ExposureStack(self.aligned, self.ref_index)


class _Timer:
    def __init__(self, sink: dict, stage: str, input_index: int | None = None):
        self.sink, self.stage, self.input_index = sink, stage, input_index

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.sink[self.stage] = self.sink.get(self.stage, 0.0) + time.perf_counter() - self.t0
        if exc is not None and not isinstance(exc, PipelineError):
            raise PipelineError(self.stage, self.input_index, exc) from exc
        return False


def _align_one(stack: ExposureStack, k: int, curve: np.ndarray, latent: np.ndarray,
               sp: SuperpixelMap, cfg: PipelineConfig) -> InputAlignment:
    timing: dict[str, float] = {}
    src = stack.images[k]
    with _Timer(timing, "flow", k):
        flow = compute_flow(src, latent, cfg.flow_params)
        warped = warp(src, flow)
    with _Timer(timing, "detection", k):
        stats = flow_variance(flow, sp)
        mask = detect_errors(stats, k, stack.ref_index, cfg.thresholds)
    with _Timer(timing, "patchmatch", k):
        aligned = correct_flagged(warped, latent, sp, mask.flagged, cfg.patch_params,
                                  input_index=k, feather=cfg.feather)
    log.info("input %d: %d/%d superpixels flagged (T=%.2f)", k, int(mask.flags.sum()),
             sp.count, mask.threshold)
    return InputAlignment(k, curve, latent, flow, warped, stats, mask, aligned, timing)


def align_stack(stack: ExposureStack, cfg: PipelineConfig | None = None) -> PipelineResult:
    """Run every alignment stage; the reference image passes through untouched."""
    cfg = cfg or PipelineConfig()
    r = stack.ref_index
    timing = {s: 0.0 for s in STAGES}
    ref = stack.reference

    with _Timer(timing, "segmentation", r):
        sp = slic_segment(ref, cfg.superpixels_for(ref.shape), cfg.compactness, cfg.slic_iterations)
    log.info("segmented reference into %d superpixels", sp.count)

    others = [k for k in range(len(stack)) if k != r]
    curves, latents = {}, {}
    for k in others:
        with _Timer(timing, "imf", k):
            curves[k] = estimate_imf(ref, stack.images[k])
            latents[k] = apply_imf(ref, curves[k])

    def job(k):
        return _align_one(stack, k, curves[k], latents[k], sp, cfg)

    if cfg.threads > 1 and len(others) > 1:
        with ThreadPoolExecutor(max_workers=min(cfg.threads, len(others))) as pool:
            results = list(pool.map(job, others))
    else:
        results = [job(k) for k in others]

    inputs = {res.index: res for res in results}
    for res in results:
        for stage, dt in res.timing.items():
            timing[stage] += dt
    aligned = tuple(ref if k == r else inputs[k].aligned for k in range(len(stack)))
    return PipelineResult(aligned, r, sp, inputs, timing)


def process(stack: ExposureStack, cfg: PipelineConfig | None = None, dump_dir=None) -> PipelineResult:
    """Align and fuse; returns every intermediate product."""
    cfg = cfg or PipelineConfig()
    t0 = time.perf_counter()
    result = align_stack(stack, cfg)
    with _Timer(result.timing, "fusion"):
        result.weights = fusion.compute_weights(result.aligned)
        result.fused = fusion.fuse(result.aligned, result.weights, cfg.fusion_depth)
    result.timing["total"] = time.perf_counter() - t0
    log.info("timing: %s", ", ".join(f"{k}={v:.2f}s" for k, v in result.timing.items()))
    if dump_dir is not None:
        dump(result, dump_dir)
    return result


def run_pipeline(stack: ExposureStack, cfg: PipelineConfig | None = None) -> np.ndarray:
    """Fused, deghosted image for ``stack``."""
    return process(stack, cfg).fused


def dump(result: PipelineResult, out_dir, with_fused: bool = True) -> Path:
    """Write intermediate products using the fixed dump layout."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_pgm16(result.superpixels.labels, out / "labels.pgm")
    save_image(result.superpixels.overlay(result.aligned[result.ref_index]), out / "labels_overlay.png")
    for k, info in result.inputs.items():
        save_flo(info.flow.u, info.flow.v, out / f"flow_{k}.flo")
        save_image(info.mask.pixel_mask(result.superpixels).astype(np.float64), out / f"mask_{k}.png")
        save_image(info.latent, out / f"latent_{k}.png")
        save_curve_csv(info.curve, out / f"imf_{k}.csv")
    for k, im in enumerate(result.aligned):
        save_image(im, out / f"aligned_{k}.png")
    if result.weights is not None:
        for k, w in enumerate(result.weights):
            save_image(w, out / f"weights_{k}.png")
    if with_fused and result.fused is not None:
        save_image(result.fused, out / "fused.png")
    lines = [f"{k} {v:.4f}" for k, v in result.timing.items()]
    (out / "timing.txt").write_text("\n".join(lines) + "\n")
    return out
