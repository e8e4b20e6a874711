"""Pixel-exact image types and transforms for the inspection workflow.

Images are 8-bit row-major interleaved grids (grayscale or RGB) wrapped
in :class:`RasterImage`; preprocessing produces a :class:`NormalizedTensor`
with values in [0, 1]. All operations are pure: inputs are never mutated
and outputs are freshly allocated. Fractional results are rounded
half-away-from-zero before clamping to [0, 255], one rule everywhere, so
outputs are reproducible sample-exact.

Gaussian blur (the base of unsharp masking) uses a kernel of radius
ceil(3*sigma) with clamp-to-edge replication at borders. Resizing is
bilinear with half-pixel-centered coordinates (src = (dst+0.5)*scale - 0.5).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from PIL import Image

__all__ = [
    "RasterImage",
    "NormalizedTensor",
    "PixelRegion",
    "GeometricOp",
    "AdjustKind",
    "unsharp_mask",
    "resize_bilinear",
    "normalize",
    "adjust",
    "add_noise",
    "denoise",
    "transform_geometric",
    "crop",
    "decode_png",
    "encode_png",
    "load_png",
    "save_png",
]

GeometricOp = Literal["rot90", "rot180", "rot270", "flip_h", "flip_v"]
AdjustKind = Literal["brightness", "contrast", "saturation", "sharpness"]


@dataclass(frozen=True)
class RasterImage:
    """8-bit image, shape (height, width, channels), channels in {1, 3}."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, np.newaxis]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected (h, w, c) with c in {{1, 3}}, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"image dimensions must be >= 1, got {px.shape[:2]}")
        if px.dtype != np.uint8:
            if px.min() < 0 or px.max() > 255:
                raise ValueError("samples must lie in [0, 255]")
            px = px.astype(np.uint8)
        px = np.ascontiguousarray(px)
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def same_pixels(self, other: "RasterImage") -> bool:
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )


@dataclass(frozen=True)
class NormalizedTensor:
    """Float image with the RasterImage layout and values in [0.0, 1.0]."""

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim == 2:
            vals = vals[:, :, np.newaxis]
        if vals.ndim != 3 or vals.shape[2] not in (1, 3):
            raise ValueError(f"expected (h, w, c) with c in {{1, 3}}, got shape {vals.shape}")
        if vals.min() < 0.0 or vals.max() > 1.0:
            raise ValueError("normalized values must lie in [0, 1]")
        vals = np.ascontiguousarray(vals)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class PixelRegion:
    """Rectangular crop window: top-left offset (x, y) and extent (w, h)."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.x < 0 or self.y < 0:
            raise ValueError(f"region offset must be non-negative, got ({self.x}, {self.y})")
        if self.w < 1 or self.h < 1:
            raise ValueError(f"region extent must be >= 1, got ({self.w}, {self.h})")


def _round_half_away(values: np.ndarray) -> np.ndarray:
    """Round to nearest integer with halves away from zero (not banker's)."""
    return np.copysign(np.floor(np.abs(values) + 0.5), values)


def _to_uint8(values: np.ndarray) -> np.ndarray:
    return np.clip(_round_half_away(values), 0, 255).astype(np.uint8)


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3.0 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def _blur_axis(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = len(kernel) // 2
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(arr, pad, mode="edge")
    out = np.zeros_like(arr)
    for i, weight in enumerate(kernel):
        sl: list[slice] = [slice(None)] * arr.ndim
        sl[axis] = slice(i, i + arr.shape[axis])
        out += weight * padded[tuple(sl)]
    return out


def gaussian_blur(img: RasterImage, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with clamp-to-edge borders.

    Returns the unrounded float result so callers (unsharp masking) can
    keep full precision for the difference image.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    kernel = _gaussian_kernel(sigma)
    blurred = img.pixels.astype(np.float64)
    blurred = _blur_axis(blurred, kernel, axis=1)
    blurred = _blur_axis(blurred, kernel, axis=0)
    return blurred


def unsharp_mask(img: RasterImage, sigma: float = 1.0, amount: float = 1.0) -> RasterImage:
    """Sharpen by adding back the high-frequency residual.

    out = clamp(in + amount * (in - blur_sigma(in))) per channel. A
    negative amount blends toward the blur instead (used by the
    sharpness adjustment with negative deltas).
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    original = img.pixels.astype(np.float64)
    blurred = gaussian_blur(img, sigma)
    sharpened = original + amount * (original - blurred)
    return RasterImage(_to_uint8(sharpened))


def resize_bilinear(img: RasterImage, out_w: int, out_h: int) -> RasterImage:
    """Bilinear resize with half-pixel-centered sampling.

    Source coordinates are src = (dst + 0.5) * scale - 0.5 per axis;
    samples outside the grid are clamped to the border.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"target dimensions must be >= 1, got {out_w}x{out_h}")
    src = img.pixels.astype(np.float64)
    in_h, in_w = img.height, img.width

    sx = (np.arange(out_w, dtype=np.float64) + 0.5) * (in_w / out_w) - 0.5
    sy = (np.arange(out_h, dtype=np.float64) + 0.5) * (in_h / out_h) - 0.5
    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = (sx - x0)[np.newaxis, :, np.newaxis]
    fy = (sy - y0)[:, np.newaxis, np.newaxis]
    x0c = np.clip(x0, 0, in_w - 1).astype(np.intp)
    x1c = np.clip(x0 + 1, 0, in_w - 1).astype(np.intp)
    y0c = np.clip(y0, 0, in_h - 1).astype(np.intp)
    y1c = np.clip(y0 + 1, 0, in_h - 1).astype(np.intp)

    top = src[np.ix_(y0c, x0c)] * (1 - fx) + src[np.ix_(y0c, x1c)] * fx
    bottom = src[np.ix_(y1c, x0c)] * (1 - fx) + src[np.ix_(y1c, x1c)] * fx
    out = top * (1 - fy) + bottom * fy
    return RasterImage(_to_uint8(out))


def normalize(img: RasterImage) -> NormalizedTensor:
    """Scale samples to [0, 1] by dividing by 255."""
    return NormalizedTensor(img.pixels.astype(np.float64) / 255.0)


def adjust(img: RasterImage, kind: AdjustKind, delta: int) -> RasterImage:
    """Photometric adjustment by a signed step in [-20, +20].

    brightness: clamp(in + delta)
    contrast:   clamp((in - 128) * (1 + delta/100) + 128)
    saturation: per-pixel blend about the luma (0.299R + 0.587G + 0.114B);
                requires a 3-channel image
    sharpness:  unsharp mask with sigma 1.0 and amount delta/20
    """
    if not -20 <= delta <= 20:
        raise ValueError(f"delta must lie in [-20, 20], got {delta}")
    px = img.pixels.astype(np.float64)
    if kind == "brightness":
        return RasterImage(_to_uint8(px + delta))
    if kind == "contrast":
        return RasterImage(_to_uint8((px - 128.0) * (1.0 + delta / 100.0) + 128.0))
    if kind == "saturation":
        if img.channels != 3:
            raise ValueError("saturation adjustment requires a 3-channel image")
        luma = 0.299 * px[:, :, 0] + 0.587 * px[:, :, 1] + 0.114 * px[:, :, 2]
        luma = luma[:, :, np.newaxis]
        return RasterImage(_to_uint8(luma + (px - luma) * (1.0 + delta / 100.0)))
    if kind == "sharpness":
        return unsharp_mask(img, sigma=1.0, amount=delta / 20.0)
    raise ValueError(f"unknown adjustment kind: {kind!r}")


def add_noise(img: RasterImage, sigma: float, seed: int) -> RasterImage:
    """Add zero-mean Gaussian noise and clamp.

    Noise comes from numpy's PCG64 generator (``np.random.default_rng``)
    seeded with ``seed``, so identical (img, sigma, seed) triples produce
    byte-identical outputs. sigma = 0 returns the input unchanged.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return img
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=img.pixels.shape)
    return RasterImage(_to_uint8(img.pixels.astype(np.float64) + noise))


def denoise(img: RasterImage) -> RasterImage:
    """3x3 median filter per channel with clamp-to-edge borders."""
    padded = np.pad(img.pixels, ((1, 1), (1, 1), (0, 0)), mode="edge")
    h, w = img.height, img.width
    stack = np.stack(
        [padded[dy : dy + h, dx : dx + w] for dy in range(3) for dx in range(3)],
        axis=-1,
    )
    # median of 9 uint8 samples is the 5th order statistic: exact, no float math
    return RasterImage(np.sort(stack, axis=-1)[..., 4])


def transform_geometric(img: RasterImage, op: GeometricOp) -> RasterImage:
    """Quarter-turn rotations (clockwise) and axis mirrors."""
    px = img.pixels
    if op == "rot90":
        out = np.rot90(px, k=-1)
    elif op == "rot180":
        out = np.rot90(px, k=2)
    elif op == "rot270":
        out = np.rot90(px, k=1)
    elif op == "flip_h":
        out = px[:, ::-1]
    elif op == "flip_v":
        out = px[::-1, :]
    else:
        raise ValueError(f"unknown geometric op: {op!r}")
    return RasterImage(np.ascontiguousarray(out))


def crop(img: RasterImage, region: PixelRegion) -> RasterImage:
    """Extract the window described by ``region``; must lie inside the image."""
    if region.x + region.w > img.width or region.y + region.h > img.height:
        raise ValueError(
            f"region {region} exceeds image bounds {img.width}x{img.height}"
        )
    window = img.pixels[region.y : region.y + region.h, region.x : region.x + region.w]
    return RasterImage(window.copy())


def decode_png(data: bytes) -> RasterImage:
    """Decode 8-bit PNG bytes; palette/alpha inputs are converted to RGB."""
    try:
        with Image.open(io.BytesIO(data)) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except Exception as exc:
        raise ValueError(f"not a decodable PNG image: {exc}") from exc
    return RasterImage(arr)


def encode_png(img: RasterImage) -> bytes:
    """Encode to PNG bytes (grayscale or RGB, 8-bit)."""
    arr = img.pixels[:, :, 0] if img.channels == 1 else img.pixels
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L" if img.channels == 1 else "RGB").save(buf, format="PNG")
    return buf.getvalue()


def load_png(path: str | Path) -> RasterImage:
    return decode_png(Path(path).read_bytes())


def save_png(img: RasterImage, path: str | Path) -> None:
    Path(path).write_bytes(encode_png(img))
