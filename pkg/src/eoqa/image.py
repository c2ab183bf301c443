"""Core raster type and geometry operations.

Images are planar float64 arrays of shape (channels, height, width) carrying
their sample range (``max_value``, 255 or 65535) and an optional ground
sampling distance tag in cm/px.  All operations are pure: they return new
Image instances and never mutate their inputs.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import cv2
import numpy as np

from .errors import DecodeError, ParameterError, SizeError



@dataclass(frozen=True)
class Image:
    """Planar raster: data[(c, y, x)] in [0, max_value], optional gsd in cm/px."""

    data: np.ndarray
    max_value: float = 255.0
    gsd: float | None = None

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def with_data(self, data: np.ndarray) -> "Image":
        return Image(np.asarray(data, dtype=np.float64), self.max_value, self.gsd)

    def validate(self) -> "Image":
        d = self.data
        if d.ndim != 3 or d.shape[0] not in (1, 3):
            raise ParameterError(f"expected (1|3, H, W) planar data, got shape {d.shape}")
        if d.shape[1] < 1 or d.shape[2] < 1:
            raise SizeError(f"degenerate image shape {d.shape}")
        if not (self.max_value > 0):
            raise ParameterError(f"max_value must be positive, got {self.max_value}")
        if not np.isfinite(d).all():
            raise ParameterError("image contains non-finite samples")
        if d.min() < 0 or d.max() > self.max_value:
            raise ParameterError("samples outside [0, max_value]")
        if self.gsd is not None and not (self.gsd > 0):
            raise ParameterError(f"gsd must be positive, got {self.gsd}")
        return self


def new_image(data: np.ndarray, max_value: float = 255.0, gsd: float | None = None) -> Image:
    """Build and validate an Image from an (H, W), (H, W, C) or (C, H, W) array."""
    a = np.asarray(data, dtype=np.float64)
    if a.ndim == 2:
        a = a[None, :, :]
    elif a.ndim == 3 and a.shape[0] not in (1, 3) and a.shape[2] in (1, 3):
        a = np.moveaxis(a, 2, 0)
    return Image(np.ascontiguousarray(a), float(max_value), gsd).validate()


def _sidecar_path(path: str) -> str:
    return path + ".json"


def load_image(path: str) -> Image:
    """Read an 8/16-bit gray or RGB PNG/TIFF; restores a gsd sidecar if present."""
    raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise DecodeError(f"cannot decode image: {path}")
    if raw.dtype == np.uint8:
        max_value = 255.0
    elif raw.dtype == np.uint16:
        max_value = 65535.0
    else:
        raise DecodeError(f"unsupported sample type {raw.dtype} in {path}")
    if raw.ndim == 2:
        data = raw[None, :, :].astype(np.float64)
    elif raw.ndim == 3 and raw.shape[2] == 3:
        # OpenCV decodes color as BGR; store planar RGB.
        data = np.moveaxis(raw[:, :, ::-1], 2, 0).astype(np.float64)
    else:
        raise DecodeError(f"unsupported channel layout {raw.shape} in {path}")
    gsd = None
    sc = _sidecar_path(path)
    if os.path.exists(sc):
        with open(sc, "r", encoding="utf-8") as fh:
            gsd = json.load(fh).get("gsd")
    return Image(np.ascontiguousarray(data), max_value, gsd).validate()


def save_image(img: Image, path: str) -> None:
    """Write PNG/TIFF at the image's native depth; gsd goes to a sidecar file."""
    img.validate()
    dtype = np.uint8 if img.max_value == 255.0 else np.uint16
    q = np.clip(np.rint(img.data), 0, img.max_value).astype(dtype)
    if img.channels == 1:
        arr = q[0]
    else:
        arr = np.moveaxis(q, 0, 2)[:, :, ::-1]  # planar RGB -> interleaved BGR
    if not cv2.imwrite(path, np.ascontiguousarray(arr)):
        raise DecodeError(f"cannot encode image: {path}")
    if img.gsd is not None:
        with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
            json.dump({"gsd": img.gsd}, fh, sort_keys=True)
            fh.write("\n")


def to_grayscale(img: Image) -> Image:
    """Luma reduction with weights 0.299/0.587/0.114; single-channel passes through."""
    img.validate()
    if img.channels == 1:
        return img
    w = np.array([0.299, 0.587, 0.114])
    data = np.tensordot(w, img.data, axes=(0, 0))[None, :, :]
    return Image(data, img.max_value, img.gsd)


def scaled_dims(width: int, height: int, scale: float) -> tuple[int, int]:
    """Output (width, height) of a resize: round-half-up of dims * scale."""
    if not (scale > 0) or not math.isfinite(scale):
        raise ParameterError(f"scale must be a positive finite number, got {scale}")
    return int(math.floor(width * scale + 0.5)), int(math.floor(height * scale + 0.5))


def _axis_coords(n_out: int, n_in: int, scale: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Half-pixel center alignment: output center o maps to (o + .5)/scale - .5.
    src = (np.arange(n_out) + 0.5) / scale - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(np.intp)
    i0 = np.minimum(i0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def resize_bilinear(img: Image, scale: float) -> Image:
    """Separable bilinear resample by a uniform scale factor.

    The gsd tag, when present, is divided by the scale factor: doubling the
    pixel count halves the ground footprint of each pixel.
    """
    img.validate()
    w2, h2 = scaled_dims(img.width, img.height, scale)
    if w2 < 1 or h2 < 1:
        raise SizeError(f"resize by {scale} of {img.width}x{img.height} is degenerate")
    x0, x1, tx = _axis_coords(w2, img.width, scale)
    y0, y1, ty = _axis_coords(h2, img.height, scale)
    d = img.data
    top = d[:, y0, :] * (1.0 - ty)[None, :, None] + d[:, y1, :] * ty[None, :, None]
    out = top[:, :, x0] * (1.0 - tx)[None, None, :] + top[:, :, x1] * tx[None, None, :]
    gsd = None if img.gsd is None else img.gsd / scale
    return Image(np.ascontiguousarray(out), img.max_value, gsd)


@dataclass(frozen=True)
class CropRect:
    x: int
    y: int
    side: int


def crop(img: Image, rect: CropRect) -> Image:
    if rect.x < 0 or rect.y < 0 or rect.side < 1 \
            or rect.x + rect.side > img.width or rect.y + rect.side > img.height:
        raise SizeError(f"crop {rect} exceeds {img.width}x{img.height}")
    data = img.data[:, rect.y:rect.y + rect.side, rect.x:rect.x + rect.side].copy()
    return Image(data, img.max_value, img.gsd)


def crop_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for a (seed, stream...) coordinate.

    Philox keyed through SeedSequence spawn keys, so every (image, crop)
    coordinate owns an independent stream and generation order is free.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def draw_crop_rects(width: int, height: int, side: int, count: int,
                    seed: int, *stream: int) -> list[CropRect]:
    """Uniform in-bounds side x side windows; deterministic in (seed, stream)."""
    if side < 1 or count < 0:
        raise ParameterError(f"bad side={side} or count={count}")
    if width < side or height < side:
        raise SizeError(f"source {width}x{height} smaller than crop side {side}")
    rects = []
    for k in range(count):
        rng = crop_rng(seed, *stream, k)
        x = int(rng.integers(0, width - side + 1))
        y = int(rng.integers(0, height - side + 1))
        rects.append(CropRect(x, y, side))
    return rects


def extract_crops(img: Image, side: int, count: int, seed: int, *stream: int) -> list[Image]:
    """count random square crops; an exact-size source yields the identity crop."""
    img.validate()
    rects = draw_crop_rects(img.width, img.height, side, count, seed, *stream)
    return [crop(img, r) for r in rects]


def circular_pad(img: Image, target_side: int) -> Image:
    """Wrap-pad each short dimension up to target_side, centered.

    The original content sits in the middle; when the deficit is odd the
    extra pixel goes to the trailing border.
    """
    img.validate()
    if target_side < 1:
        raise ParameterError(f"target_side must be >= 1, got {target_side}")
    dy = max(0, target_side - img.height)
    dx = max(0, target_side - img.width)
    if dx == 0 and dy == 0:
        return img
    pad = ((0, 0), (dy // 2, dy - dy // 2), (dx // 2, dx - dx // 2))
    return Image(np.pad(img.data, pad, mode="wrap"), img.max_value, img.gsd)


def downsample(img: Image, factor: int) -> Image:
    """Bilinear reduction by an integer factor in {2, 3, 4}.

    Dimensions are first truncated to a multiple of the factor so the output
    size is exactly dims/factor.
    """
    img.validate()
    if factor not in (2, 3, 4):
        raise ParameterError(f"downsample factor must be 2, 3 or 4, got {factor}")
    w = (img.width // factor) * factor
    h = (img.height // factor) * factor
    if w < factor or h < factor:
        raise SizeError(f"image {img.width}x{img.height} too small for factor {factor}")
    trimmed = Image(img.data[:, :h, :w], img.max_value, img.gsd)
    return resize_bilinear(trimmed, 1.0 / factor)
