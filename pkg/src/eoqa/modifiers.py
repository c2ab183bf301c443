"""Parameterized image degradations and self-annotating dataset generation.

Five modifier families, each swept over an equally spaced parameter grid:

  blur       extra Gaussian blur of width sigma (7x7 kernel)
  sharpness  unsharp-mask factor F (F = 1 identity, F < 1 softens)
  gsd        ground-sampling-distance degradation via bilinear upsampling
  rer        edge-response reduction: Gaussian blur sized so a reference
             edge's relative edge response hits the target
  snr        additive Gaussian noise with sigma = mean(image) / target_snr

Grid values annotate their own class index, which is what the interval
regressor trains against.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.ndimage import convolve1d
from scipy.optimize import brentq
from scipy.special import erfinv

from .errors import ParameterError, SizeError
from .image import (CropRect, Image, crop, crop_rng, draw_crop_rects,
                    resize_bilinear, save_image)

MANIFEST_VERSION = 1


class ModifierKind(str, Enum):
    BLUR = "blur"
    SHARPNESS = "sharpness"
    GSD = "gsd"
    RER = "rer"
    SNR = "snr"


@dataclass(frozen=True)
class ParamGrid:
    """N equally spaced parameter values on [lo, hi], both endpoints included."""

    kind: ModifierKind
    n: int
    lo: float
    hi: float

    def __post_init__(self):
        if self.n < 2:
            raise ParameterError(f"grid needs at least 2 values, got n={self.n}")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise ParameterError(f"bad grid range [{self.lo}, {self.hi}]")

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    def value_to_class(self, value: float) -> int:
        """Index of the nearest grid value; ties resolve to the lower index."""
        v = float(value)
        if v < self.lo or v > self.hi:
            warnings.warn(f"{self.kind.value} value {v} outside grid "
                          f"[{self.lo}, {self.hi}], clamping", stacklevel=2)
            v = min(max(v, self.lo), self.hi)
        return int(np.argmin(np.abs(self.values() - v)))

    def class_to_value(self, k: int) -> float:
        if not 0 <= k < self.n:
            raise ParameterError(f"class {k} outside [0, {self.n})")
        return float(self.values()[k])


DEFAULT_GRIDS: dict[ModifierKind, ParamGrid] = {
    ModifierKind.BLUR: ParamGrid(ModifierKind.BLUR, 50, 1.0, 2.5),
    ModifierKind.SHARPNESS: ParamGrid(ModifierKind.SHARPNESS, 9, 1.0, 10.0),
    ModifierKind.GSD: ParamGrid(ModifierKind.GSD, 10, 0.30, 0.60),
    ModifierKind.RER: ParamGrid(ModifierKind.RER, 40, 0.15, 0.55),
    ModifierKind.SNR: ParamGrid(ModifierKind.SNR, 40, 15.0, 30.0),
}

# Reference values the degradations are measured against.
BASE_RER = 0.55
BASE_GSD = 0.30
UNSHARP_SIGMA = 1.0
BLUR_RADIUS = 3  # 7x7 kernel


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    """Normalized 1-D Gaussian sampled on [-radius, radius]."""
    if sigma <= 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def _rer_kernel(target_rer: float, base_rer: float, radius: int) -> np.ndarray:
    """Discrete blur kernel that takes a base_rer Gaussian edge to target_rer.

    A sampled Gaussian does not act like its continuous counterpart (integer
    sampling loses variance for small widths), so instead of trusting the
    quadrature formula we root-find the sample width whose composition with
    the base edge profile reads exactly target_rer half a pixel either side
    of the edge.
    """
    from scipy.special import ndtr

    s_b = rer_to_sigma(base_rer)
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    step = ndtr((0.5 - t) / s_b) - ndtr((-0.5 - t) / s_b)

    def response(s: float) -> float:
        k = np.exp(-0.5 * (t / s) ** 2)
        k /= k.sum()
        return float((k * step).sum())

    lo, hi = 1e-4, float(radius)
    if response(hi) >= target_rer:
        raise ParameterError(f"radius {radius} too small for target {target_rer}")
    s = brentq(lambda x: response(x) - target_rer, lo, hi)
    return gaussian_kernel(float(s), radius)


def gaussian_filter(data: np.ndarray, sigma: float, radius: int) -> np.ndarray:
    k = gaussian_kernel(sigma, radius)
    out = convolve1d(data, k, axis=1, mode="reflect")
    return convolve1d(out, k, axis=2, mode="reflect")


def apply_blur(img: Image, sigma: float) -> Image:
    """Extra Gaussian blur, 7x7 kernel, reflected borders, per channel."""
    img.validate()
    if sigma <= 0:
        raise ParameterError(f"blur sigma must be > 0, got {sigma}")
    out = gaussian_filter(img.data, sigma, BLUR_RADIUS)
    return img.with_data(np.clip(out, 0.0, img.max_value))


def apply_sharpness(img: Image, factor: float) -> Image:
    """Unsharp mask: base + F * (image - base); F = 1 is the identity."""
    img.validate()
    if factor < 0:
        raise ParameterError(f"sharpness factor must be >= 0, got {factor}")
    if factor == 1.0:
        return img
    base = gaussian_filter(img.data, UNSHARP_SIGMA, BLUR_RADIUS)
    out = base + factor * (img.data - base)
    return img.with_data(np.clip(out, 0.0, img.max_value))


def apply_gsd(img: Image, target_gsd: float, base_gsd: float = BASE_GSD) -> Image:
    """Degrade GSD by bilinear oversampling: scale = target / base >= 1.

    The result is stored at the enlarged pixel count and tagged with the
    target GSD (the interpolation adds no information, so the effective
    ground resolution is the coarser target value).
    """
    img.validate()
    if not (0 < base_gsd <= target_gsd):
        raise ParameterError(f"need 0 < base_gsd <= target_gsd, got {base_gsd}, {target_gsd}")
    if target_gsd == base_gsd:
        return Image(img.data.copy(), img.max_value, target_gsd)
    out = resize_bilinear(img, target_gsd / base_gsd)
    return Image(out.data, out.max_value, target_gsd)


def rer_to_sigma(rer: float) -> float:
    """Gaussian ESF width whose relative edge response equals rer.

    The edge response of a Gaussian edge profile read half a pixel either
    side of the edge is erf(1 / (2 sqrt(2) sigma)); this inverts it.
    """
    if not 0 < rer < 1:
        raise ParameterError(f"rer must lie in (0, 1), got {rer}")
    return float(1.0 / (2.0 * math.sqrt(2.0) * erfinv(rer)))


def apply_rer(img: Image, target_rer: float, base_rer: float = BASE_RER) -> Image:
    """Blur just enough that a base_rer edge would measure target_rer.

    Gaussian widths compose in quadrature, so the extra blur is
    sqrt(sigma(target)^2 - sigma(base)^2).  The kernel radius follows the
    required width (4 sigma) instead of the fixed 7x7 used by apply_blur;
    truncating wide kernels would overshoot the target response.
    """
    img.validate()
    if not 0 < target_rer <= base_rer < 1:
        raise ParameterError(f"need 0 < target_rer <= base_rer < 1, "
                             f"got {target_rer}, {base_rer}")
    if target_rer == base_rer:
        return img.with_data(img.data.copy())
    s_t = rer_to_sigma(target_rer)
    s_b = rer_to_sigma(base_rer)
    sigma = math.sqrt(s_t * s_t - s_b * s_b)
    radius = max(BLUR_RADIUS, int(math.ceil(4.0 * sigma)) + 1)
    k = _rer_kernel(target_rer, base_rer, radius)
    out = convolve1d(img.data, k, axis=1, mode="reflect")
    out = convolve1d(out, k, axis=2, mode="reflect")
    return img.with_data(np.clip(out, 0.0, img.max_value))


def apply_snr(img: Image, target_snr: float, seed: int) -> Image:
    """Additive Gaussian noise with sigma = mean(image) / target_snr."""
    img.validate()
    if target_snr <= 0:
        raise ParameterError(f"target_snr must be > 0, got {target_snr}")
    sigma = float(img.data.mean()) / target_snr
    rng = crop_rng(seed, 0x5112)
    noise = rng.normal(0.0, sigma, size=img.data.shape)
    return img.with_data(np.clip(img.data + noise, 0.0, img.max_value))


def apply_modifier(kind: ModifierKind, img: Image, value: float, seed: int = 0,
                   base_rer: float = BASE_RER, base_gsd: float = BASE_GSD) -> Image:
    kind = ModifierKind(kind)
    if kind is ModifierKind.BLUR:
        return apply_blur(img, value)
    if kind is ModifierKind.SHARPNESS:
        return apply_sharpness(img, value)
    if kind is ModifierKind.GSD:
        return apply_gsd(img, value, base_gsd)
    if kind is ModifierKind.RER:
        return apply_rer(img, value, base_rer)
    return apply_snr(img, value, seed)


def expected_entry_count(n_sources: int, grid_n: int, crops_per_value: int) -> int:
    """Every source x grid value x crop index yields one dataset entry."""
    return n_sources * grid_n * crops_per_value


@dataclass(frozen=True)
class ManifestEntry:
    source: str
    value: float
    class_index: int
    crop: CropRect
    seed: int
    path: str


@dataclass
class DatasetManifest:
    kind: ModifierKind
    grid: ParamGrid
    side: int
    crops_per_value: int
    seed: int
    entries: list[ManifestEntry] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)
    version: int = MANIFEST_VERSION

    def sources(self) -> list[str]:
        seen: dict[str, None] = {}
        for e in self.entries:
            seen.setdefault(e.source)
        return list(seen)

    def save(self, path: str) -> None:
        header = {
            "version": self.version,
            "kind": self.kind.value,
            "grid": {"n": self.grid.n, "lo": self.grid.lo, "hi": self.grid.hi},
            "side": self.side,
            "crops_per_value": self.crops_per_value,
            "seed": self.seed,
            "skipped": self.skipped,
        }
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for e in self.entries:
                rec = {"source": e.source, "value": e.value, "class": e.class_index,
                       "crop": [e.crop.x, e.crop.y, e.crop.side],
                       "seed": e.seed, "path": e.path}
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @staticmethod
    def load(path: str) -> "DatasetManifest":
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
        if not lines:
            raise ParameterError(f"empty manifest: {path}")
        h = json.loads(lines[0])
        if h.get("version") != MANIFEST_VERSION:
            raise ParameterError(f"unsupported manifest version {h.get('version')}")
        kind = ModifierKind(h["kind"])
        grid = ParamGrid(kind, h["grid"]["n"], h["grid"]["lo"], h["grid"]["hi"])
        man = DatasetManifest(kind, grid, h["side"], h["crops_per_value"], h["seed"],
                              skipped=h.get("skipped", []))
        for ln in lines[1:]:
            r = json.loads(ln)
            man.entries.append(ManifestEntry(
                r["source"], r["value"], r["class"],
                CropRect(*r["crop"]), r["seed"], r["path"]))
        return man


def _entry_seed(seed: int, *stream: int) -> int:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(stream))
    return int(ss.generate_state(1)[0])


def generate_annotated_dataset(sources: list[tuple[str, Image]], kind: ModifierKind,
                               grid: ParamGrid | None, side: int, crops_per_value: int,
                               seed: int, out_dir: str,
                               base_rer: float = BASE_RER, base_gsd: float = BASE_GSD,
                               threads: int = 1) -> DatasetManifest:
    """Sweep every source through every grid value and write annotated crops.

    Layout: out_dir/<kind>/<class>/<source-index>_<source>_<crop>.png with a
    manifest.jsonl alongside.  Crop windows and noise draws are keyed by
    (seed, source index, value index, crop index), so regeneration with the
    same arguments is byte-identical and source order is the only order that
    matters.  Sources too small for the crop side after modification are
    skipped and logged in the manifest, not fatal.
    """
    kind = ModifierKind(kind)
    if grid is None:
        grid = DEFAULT_GRIDS[kind]
    if grid.kind != kind:
        raise ParameterError(f"grid kind {grid.kind} does not match {kind}")
    if side < 1 or crops_per_value < 1:
        raise ParameterError(f"bad side={side} or crops_per_value={crops_per_value}")

    man = DatasetManifest(kind, grid, side, crops_per_value, seed)
    values = grid.values()

    def run_one(i: int, name: str, img: Image, vi: int) -> tuple[list[ManifestEntry], dict | None]:
        value = float(values[vi])
        mod_seed = _entry_seed(seed, i, vi)
        mod = apply_modifier(kind, img, value, seed=mod_seed,
                             base_rer=base_rer, base_gsd=base_gsd)
        if mod.width < side or mod.height < side:
            return [], {"source": name, "value": value,
                        "reason": f"{mod.width}x{mod.height} smaller than crop side {side}"}
        stem = os.path.splitext(os.path.basename(name))[0]
        cls = grid.value_to_class(value)
        cls_dir = os.path.join(out_dir, kind.value, f"{cls:03d}")
        os.makedirs(cls_dir, exist_ok=True)
        rects = draw_crop_rects(mod.width, mod.height, side, crops_per_value, seed, i, vi)
        out = []
        for ci, rect in enumerate(rects):
            rel = os.path.join(kind.value, f"{cls:03d}", f"{i:04d}_{stem}_{ci:03d}.png")
            save_image(crop(mod, rect), os.path.join(out_dir, rel))
            out.append(ManifestEntry(name, value, cls, rect,
                                     _entry_seed(seed, i, vi, ci), rel))
        return out, None

    tasks = [(i, name, img, vi)
             for i, (name, img) in enumerate(sources)
             for vi in range(grid.n)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda t: run_one(*t), tasks))
    else:
        results = [run_one(*t) for t in tasks]
    for entries, skip in results:
        man.entries.extend(entries)
        if skip is not None:
            man.skipped.append(skip)

    os.makedirs(out_dir, exist_ok=True)
    man.save(os.path.join(out_dir, "manifest.jsonl"))
    return man
