"""Image and exposure-stack I/O.

Images live in memory as ``float64`` arrays of shape ``(H, W, C)`` with
``C`` in ``{1, 3}`` and samples in ``[0, 1]``.  Storage is 8-bit PNG or
binary PPM/PGM; a sample ``s`` is stored as ``round(clamp(s) * 255)`` with
halves rounded away from zero.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

LUMA = np.array([0.299, 0.587, 0.114])

_WRITABLE = {".png": "PNG", ".ppm": "PPM", ".pgm": "PPM", ".pnm": "PPM"}


class UnsupportedImageError(ValueError):
    """Raised for files that are readable but not 8-bit gray/RGB."""


@dataclass(frozen=True)
class ExposureStack:
    """Images ordered from low to high exposure plus the reference index."""

    images: tuple[np.ndarray, ...]
    ref_index: int

    def __post_init__(self):
        images = tuple(as_image(im) for im in self.images)
        object.__setattr__(self, "images", images)
        if len(images) < 2:
            raise ValueError(f"an exposure stack needs >= 2 images, got {len(images)}")
        shape = images[0].shape
        for k, im in enumerate(images):
            if im.shape != shape:
                raise ValueError(f"image {k} has shape {im.shape}, expected {shape}")
        if not 0 <= self.ref_index < len(images):
            raise ValueError(f"ref_index {self.ref_index} out of range for {len(images)} images")

    def __len__(self):
        return len(self.images)

    @property
    def reference(self) -> np.ndarray:
        return self.images[self.ref_index]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.images[0].shape

    def mean_luminances(self) -> list[float]:
        return [float(to_gray(im).mean()) for im in self.images]

    def is_monotone(self) -> bool:
        lum = self.mean_luminances()
        return all(a <= b for a, b in zip(lum, lum[1:]))


def as_image(img) -> np.ndarray:
    """Coerce an array to the ``(H, W, C)`` float64 layout without copying when possible."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"expected an (H, W), (H, W, 1) or (H, W, 3) image, got shape {arr.shape}")
    return arr


def to_gray(img: np.ndarray) -> np.ndarray:
    """Luma ``0.299 R + 0.587 G + 0.114 B`` as an ``(H, W)`` array."""
    img = as_image(img)
    if img.shape[2] == 1:
        return img[:, :, 0]
    return img @ LUMA


def quantize(img: np.ndarray) -> np.ndarray:
    """Map ``[0, 1]`` samples to bytes, rounding halves away from zero."""
    clipped = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return np.floor(clipped * 255.0 + 0.5).astype(np.uint8)


def dequantize(data: np.ndarray) -> np.ndarray:
    return np.asarray(data, dtype=np.float64) / 255.0


def load_image(path) -> np.ndarray:
    """Read an 8-bit gray or RGB PNG/PPM/PGM into an ``(H, W, C)`` float image.

    Alpha channels are dropped and palette images expanded to RGB.  Any other
    mode (16-bit, 1-bit, CMYK, float) raises :class:`UnsupportedImageError`.
    """
    path = Path(path)
    with Image.open(path) as im:
        im.load()
        mode = im.mode
        if mode == "P":
            im = im.convert("RGBA" if "transparency" in im.info else "RGB")
            mode = im.mode
        if mode in ("RGBA", "RGBX"):
            im = im.convert("RGB")
        elif mode == "LA":
            im = im.convert("L")
        elif mode not in ("L", "RGB"):
            raise UnsupportedImageError(f"{path}: unsupported pixel mode {mode!r} (need 8-bit L or RGB)")
        data = np.asarray(im)
    return as_image(dequantize(data))


def save_image(img: np.ndarray, path) -> None:
    """Write ``img`` as 8-bit PNG, PPM (P6) or PGM (P5) depending on the suffix."""
    path = Path(path)
    fmt = _WRITABLE.get(path.suffix.lower())
    if fmt is None:
        raise UnsupportedImageError(f"{path}: cannot write format {path.suffix!r}")
    img = as_image(img)
    data = quantize(img)
    if path.suffix.lower() == ".pgm":
        if img.shape[2] != 1:
            raise ValueError(f"{path}: PGM output needs a single-channel image")
        pil = Image.fromarray(data[:, :, 0], mode="L")
    elif path.suffix.lower() == ".ppm" or img.shape[2] == 3:
        if img.shape[2] == 1:
            data = np.repeat(data, 3, axis=2)
        pil = Image.fromarray(data, mode="RGB")
    else:
        pil = Image.fromarray(data[:, :, 0], mode="L")
    pil.save(path, format=fmt)


def load_stack(paths: Sequence, ref_index: int) -> ExposureStack:
    """Load images in the given order; ordering is never inferred from content."""
    if len(paths) < 2:
        raise ValueError(f"an exposure stack needs >= 2 images, got {len(paths)}")
    images = [load_image(p) for p in paths]
    shape = images[0].shape
    for p, im in zip(paths, images):
        if im.shape != shape:
            raise ValueError(f"{p}: shape {im.shape} does not match {paths[0]} {shape}")
    return ExposureStack(tuple(images), ref_index)


def save_pgm16(labels: np.ndarray, path) -> None:
    """Write an integer raster as a 16-bit binary PGM (big-endian samples)."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError("label raster must be 2-D")
    if labels.size and (labels.min() < 0 or labels.max() > 65535):
        raise ValueError("label values must fit in 16 bits")
    h, w = labels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        f.write(labels.astype(">u2").tobytes())


def load_pgm16(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    pos += 1
    if tokens[0] != b"P5":
        raise UnsupportedImageError(f"{path}: not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(raw[pos:], dtype=dtype, count=w * h).reshape(h, w).astype(np.int64)


FLO_MAGIC = b"PIEH"


def save_flo(u: np.ndarray, v: np.ndarray, path) -> None:
    """Middlebury ``.flo`` layout: magic, width, height, interleaved little-endian float32 u, v."""
    u = np.asarray(u, dtype="<f4")
    v = np.asarray(v, dtype="<f4")
    h, w = u.shape
    with open(path, "wb") as f:
        f.write(FLO_MAGIC)
        f.write(struct.pack("<ii", w, h))
        f.write(np.stack([u, v], axis=-1).tobytes())


def load_flo(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as f:
        if f.read(4) != FLO_MAGIC:
            raise UnsupportedImageError(f"{path}: bad .flo magic")
        w, h = struct.unpack("<ii", f.read(8))
        data = np.frombuffer(f.read(), dtype="<f4", count=w * h * 2).reshape(h, w, 2)
    return data[..., 0].astype(np.float64), data[..., 1].astype(np.float64)
