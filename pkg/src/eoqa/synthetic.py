"""Deterministic synthetic rasters for tests, demos and desk-scale training.

The edge phantom is built so its analytic edge-spread function is exact: the
edge runs at slope 1/4, samples are point evaluations of a normal CDF along
the edge normal, and projected distances land on a quarter-pixel lattice.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.special import ndtr

from .errors import ParameterError
from .image import Image, new_image


def _rng(seed: int, *stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def constant(side: int, value: float, max_value: float = 255.0) -> Image:
    return new_image(np.full((side, side), float(value)), max_value)


def gradient(side: int, lo: float, hi: float, axis: str = "x",
             max_value: float = 255.0) -> Image:
    """Linear ramp from lo to hi along x or y."""
    if axis not in ("x", "y"):
        raise ParameterError(f"axis must be 'x' or 'y', got {axis!r}")
    ramp = np.linspace(float(lo), float(hi), side)
    data = np.tile(ramp, (side, 1)) if axis == "x" else np.tile(ramp[:, None], (1, side))
    return new_image(data, max_value)


def checkerboard(side: int, period: int, lo: float = 0.0, hi: float = 255.0,
                 max_value: float = 255.0) -> Image:
    y, x = np.ogrid[:side, :side]
    cells = ((x // period) + (y // period)) % 2
    return new_image(np.where(cells == 0, float(lo), float(hi)), max_value)


def edge_phantom(sigma: float, side: int = 96, low: float = 0.2, high: float = 0.8,
                 orientation: str = "x", slope: float = 0.25,
                 max_value: float = 255.0) -> Image:
    """Slanted step edge with a Gaussian edge-spread profile of width sigma.

    sigma is measured in pixels along the edge normal; sigma = 0 gives an
    ideal step.  low/high are fractions of max_value.  Orientation "x" means
    the profile varies along x (a near-vertical edge), "y" the transpose,
    "oblique" a 45 degree edge.
    """
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    if not (0 <= low < high <= 1):
        raise ParameterError(f"need 0 <= low < high <= 1, got {low}, {high}")
    if orientation == "oblique":
        slope = 1.0
    c = side // 2
    y, x = np.mgrid[:side, :side].astype(np.float64)
    # Signed distance along x to the edge line, then scaled onto the normal.
    d = (x - c) - slope * (y - c)
    cos_t = 1.0 / math.sqrt(1.0 + slope * slope)
    if sigma == 0.0:
        prof = (d >= 0).astype(np.float64)
    else:
        prof = ndtr(d * cos_t / sigma)
    data = (low + (high - low) * prof) * max_value
    if orientation == "y":
        data = data.T
    return new_image(np.ascontiguousarray(data), max_value)


def texture(side: int, seed: int, max_value: float = 255.0, density: float = 1.0,
            smooth: float = 0.6) -> Image:
    """Busy synthetic scene: bright ground, dark blocks, discs and thin lines.

    Shape statistics are stable across seeds so that only genuine signal
    degradations (blur, noise, resampling) move the image's edge content.
    A light antialiasing pass (smooth, Gaussian sigma in pixels) keeps edge
    profiles sensor-like instead of ideal steps; pass 0 to disable.
    """
    rng = _rng(seed, 0x7E97)
    base = 0.72 + 0.08 * rng.random()
    img = np.full((side, side), base)
    # gentle illumination field so scenes are not exactly flat
    gx, gy = rng.uniform(-0.04, 0.04, size=2)
    y, x = np.mgrid[:side, :side] / max(side - 1, 1)
    img += gx * (x - 0.5) + gy * (y - 0.5)

    n_shapes = int(round(density * 14 * (side / 64.0) ** 2))
    for _ in range(n_shapes):
        kind = rng.integers(0, 3)
        val = rng.uniform(0.08, 0.42)
        if kind == 0:  # rectangle
            w = int(rng.integers(3, max(4, side // 6)))
            h = int(rng.integers(3, max(4, side // 6)))
            x0 = int(rng.integers(0, side - w + 1))
            y0 = int(rng.integers(0, side - h + 1))
            img[y0:y0 + h, x0:x0 + w] = val
        elif kind == 1:  # disc
            r = int(rng.integers(2, max(3, side // 10)))
            cx = int(rng.integers(r, side - r))
            cy = int(rng.integers(r, side - r))
            yy, xx = np.ogrid[-cy:side - cy, -cx:side - cx]
            img[yy * yy + xx * xx <= r * r] = val
        else:  # thin line, 1-2 px
            x0, y0, x1, y1 = rng.integers(0, side, size=4)
            n = 2 * side
            xs = np.clip(np.rint(np.linspace(x0, x1, n)).astype(int), 0, side - 1)
            ys = np.clip(np.rint(np.linspace(y0, y1, n)).astype(int), 0, side - 1)
            img[ys, xs] = val
            if rng.random() < 0.5:
                img[np.clip(ys + 1, 0, side - 1), xs] = val
    if smooth > 0:
        img = gaussian_filter(img, sigma=smooth, mode="reflect", truncate=5.0)
    return new_image(np.clip(img, 0.0, 1.0) * max_value, max_value)


def texture_set(count: int, side: int, seed: int, max_value: float = 255.0) -> list[Image]:
    return [texture(side, seed + 1000 * k, max_value) for k in range(count)]
