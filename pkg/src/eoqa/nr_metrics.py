"""No-reference quality measurements: patch SNR and slanted-edge analytics.

The edge chain follows the classic slanted-edge recipe: locate the strongest
straight edge from per-row derivative centroids, fit a line, project every
pixel onto the edge normal, bin the projected samples at quarter-pixel
resolution into an edge-spread function (ESF), and derive from it

  rer             relative edge response, ESF(+0.5) - ESF(-0.5)
  lsf_fwhm        full width at half maximum of the line-spread function
  mtf_at_nyquist  modulation transfer at 0.5 cycles/px

Distances are binned along the pixel row axis (keeping samples on an exact
lattice for near-vertical edges) and the ESF axis is rescaled onto the edge
normal, so all derived quantities are in pixels along the normal.  The MTF
divides out the known attenuation of the central-difference derivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import EdgeNotFound, MeasurementUnavailable, ParameterError
from .image import Image, to_grayscale
from .modifiers import gaussian_filter

SNR_PATCH = 16
SNR_COV_THRESHOLD = 0.05
NYQUIST = 0.5


@dataclass(frozen=True)
class SnrEstimate:
    median: float
    mean: float
    n_patches: int


def estimate_snr(img: Image, patch: int = SNR_PATCH,
                 cov_threshold: float = SNR_COV_THRESHOLD) -> SnrEstimate:
    """Patch-based SNR: mean/std over homogeneous patches.

    Homogeneity is judged on a blurred copy (coefficient of variation below
    cov_threshold) so that noise itself does not disqualify flat patches;
    the SNR of each qualifying patch is then computed on the raw samples.
    Raises MeasurementUnavailable when no patch qualifies.
    """
    img.validate()
    if img.height < patch or img.width < patch:
        raise MeasurementUnavailable(f"image smaller than {patch}x{patch} patch")
    g = to_grayscale(img).data[0]
    smooth = gaussian_filter(g[None], 2.0, 8)[0]
    vals = []
    for ty in range(0, g.shape[0] - patch + 1, patch):
        for tx in range(0, g.shape[1] - patch + 1, patch):
            sm = smooth[ty:ty + patch, tx:tx + patch]
            m = sm.mean()
            if m <= 0 or sm.std() / m >= cov_threshold:
                continue
            raw = g[ty:ty + patch, tx:tx + patch]
            s = raw.std()
            if s == 0.0:
                continue
            vals.append(raw.mean() / s)
    if not vals:
        raise MeasurementUnavailable("no homogeneous patches")
    a = np.asarray(vals)
    return SnrEstimate(float(np.median(a)), float(a.mean()), len(vals))


@dataclass(frozen=True)
class EdgeProfile:
    """Normalized ESF on a uniform axis in pixels along the edge normal."""

    axis: np.ndarray      # bin centers, zero at the half-rise point
    esf: np.ndarray       # normalized to approach 0 and 1 at the tails
    spacing: float        # axis step
    orientation: str
    slope: float          # fitted edge slope, columns per row
    filled: np.ndarray | None = None  # bins backed by samples (None: all)

    def _samples(self) -> tuple[np.ndarray, np.ndarray]:
        if self.filled is None:
            return self.axis, self.esf
        return self.axis[self.filled], self.esf[self.filled]


def _row_centroids(g: np.ndarray, contrast_threshold: float,
                   halfwidth: int = 5) -> tuple[np.ndarray, np.ndarray]:
    d = np.diff(g, axis=1)
    rows, cols = [], []
    for y in range(g.shape[0]):
        w = np.abs(d[y])
        j = int(np.argmax(w))
        if w[j] < contrast_threshold:
            continue
        a, b = max(0, j - halfwidth), min(len(w), j + halfwidth + 1)
        ww = w[a:b]
        # backward differences sit halfway between the sample centers
        xx = np.arange(a, b) + 0.5
        rows.append(y)
        cols.append(float((xx * ww).sum() / ww.sum()))
    return np.asarray(rows, dtype=np.float64), np.asarray(cols, dtype=np.float64)


def measure_edge_response(img: Image, orientation: str = "x", oversampling: int = 4,
                          contrast_threshold: float = 0.05) -> EdgeProfile:
    """Extract the ESF of the strongest straight edge.

    orientation "x" expects intensity varying along x (near-vertical edge),
    "y" the transpose, "oblique" a roughly diagonal edge.  Raises
    EdgeNotFound when no consistent edge is present.
    """
    img.validate()
    if orientation not in ("x", "y", "oblique"):
        raise ParameterError(f"unknown orientation {orientation!r}")
    if oversampling < 1:
        raise ParameterError(f"oversampling must be >= 1, got {oversampling}")
    g = to_grayscale(img).data[0] / img.max_value
    if orientation == "y":
        g = g.T

    ys, cs = _row_centroids(g, contrast_threshold)
    if len(ys) < max(8, int(0.3 * g.shape[0])):
        raise EdgeNotFound(f"only {len(ys)} rows show an edge transition")
    slope, offset = np.polyfit(ys, cs, 1)
    if abs(slope) > 2.0:
        raise EdgeNotFound(f"edge slope {slope:.2f} too far from the requested axis")
    cos_t = 1.0 / math.sqrt(1.0 + slope * slope)
    spacing = cos_t / oversampling

    yy, xx = np.mgrid[:g.shape[0], :g.shape[1]].astype(np.float64)
    dist = xx - (slope * yy + offset)
    limit = min(g.shape) / 2.0
    keep = np.abs(dist) <= limit
    k = np.rint(dist[keep] * oversampling).astype(np.int64)
    v = g[keep]

    kmin = int(k.min())
    idx = k - kmin
    counts = np.bincount(idx)
    sums = np.bincount(idx, weights=v)
    filled = counts > 0
    if filled.sum() < 8:
        raise EdgeNotFound("too few populated ESF bins")
    pos = np.arange(len(counts), dtype=np.float64)
    esf = np.empty_like(pos)
    esf[filled] = sums[filled] / counts[filled]
    if not filled.all():
        esf[~filled] = np.interp(pos[~filled], pos[filled], esf[filled])
    first, last = np.flatnonzero(filled)[[0, -1]]
    esf = esf[first:last + 1]
    filled = filled[first:last + 1]
    axis = (np.arange(first, last + 1) + kmin) * spacing

    tail = max(4, len(esf) * 15 // 100)
    lo = float(np.median(esf[:tail]))
    hi = float(np.median(esf[-tail:]))
    if hi < lo:  # make the profile ascend
        esf, axis = esf[::-1].copy(), -axis[::-1].copy()
        filled = filled[::-1].copy()
        lo, hi = hi, lo
    if hi - lo < contrast_threshold:
        raise EdgeNotFound(f"edge contrast {hi - lo:.4f} below threshold")
    esf = (esf - lo) / (hi - lo)

    # center the axis at the half-rise point nearest the steepest slope
    interp = PchipInterpolator(axis, esf)
    above = esf - 0.5
    bracket = np.flatnonzero(above[:-1] * above[1:] <= 0)
    if len(bracket) == 0:
        raise EdgeNotFound("ESF never crosses half rise")
    steep = int(np.argmax(np.abs(np.diff(esf))))
    i = int(bracket[np.argmin(np.abs(bracket - steep))])
    if above[i] == 0.0:
        x0 = axis[i]
    else:
        x0 = brentq(lambda t: float(interp(t)) - 0.5, axis[i], axis[i + 1])
    return EdgeProfile(axis - x0, esf, spacing, orientation, float(slope),
                       filled if not filled.all() else None)


def rer(profile: EdgeProfile) -> float:
    """Relative edge response: ESF read half a pixel either side of the edge."""
    x, e = profile._samples()
    interp = PchipInterpolator(x, e)
    return float(interp(0.5) - interp(-0.5))


def _lsf_central_diff(profile: EdgeProfile) -> tuple[np.ndarray, np.ndarray]:
    e, x = profile.esf, profile.axis
    lsf = (e[2:] - e[:-2]) / (2.0 * profile.spacing)
    return x[1:-1], lsf


def lsf_fwhm(profile: EdgeProfile) -> float:
    """FWHM of the LSF (derivative of a monotone ESF interpolant).

    Raises MeasurementUnavailable when the region above half maximum is not
    a single contiguous peak.
    """
    x, e = profile._samples()
    interp = PchipInterpolator(x, e)
    deriv = interp.derivative()
    step = profile.spacing / 8.0
    xs = np.arange(x[0], x[-1] + step / 2, step)
    ld = np.asarray(deriv(xs))
    peak = ld.max()
    if peak <= 0:
        raise MeasurementUnavailable("LSF has no positive peak")
    above = ld >= 0.5 * peak
    runs = np.flatnonzero(np.diff(above.astype(int)))
    if above[0] or above[-1] or len(runs) != 2:
        raise MeasurementUnavailable("LSF is not unimodal at half maximum")
    i0, i1 = runs[0], runs[1]
    # linear refinement of the two half-max crossings
    x_lo = xs[i0] + step * (0.5 * peak - ld[i0]) / (ld[i0 + 1] - ld[i0])
    x_hi = xs[i1] + step * (0.5 * peak - ld[i1]) / (ld[i1 + 1] - ld[i1])
    return float(x_hi - x_lo)


def mtf(profile: EdgeProfile, freq: float) -> float:
    """|FT of the LSF| at freq (cycles/px), normalized so MTF(0) = 1.

    The LSF comes from central differences of the binned ESF; the sinc
    attenuation of that derivative stencil is divided out.
    """
    x, lsf = _lsf_central_diff(profile)
    m0 = float(np.abs(lsf.sum()))
    if m0 == 0.0:
        raise MeasurementUnavailable("flat ESF, MTF undefined")
    m = float(np.abs(np.sum(lsf * np.exp(-2j * np.pi * freq * x))))
    corr = float(np.sinc(2.0 * freq * profile.spacing))
    if corr <= 0:
        raise MeasurementUnavailable(f"frequency {freq} beyond the derivative support")
    return float(min(1.0, m / m0 / corr))


def mtf_at_nyquist(profile: EdgeProfile) -> float:
    return mtf(profile, NYQUIST)


@dataclass
class NrReport:
    """Best-effort bundle of NR measurements; None marks unavailable fields."""

    snr_median: float | None = None
    snr_mean: float | None = None
    rer_x: float | None = None
    rer_y: float | None = None
    rer_oblique: float | None = None
    fwhm_x: float | None = None
    fwhm_y: float | None = None
    mtf_nyq_x: float | None = None
    mtf_nyq_y: float | None = None

    def rer_xy(self) -> float | None:
        vals = [v for v in (self.rer_x, self.rer_y) if v is not None]
        return sum(vals) / len(vals) if vals else None

    def fwhm_xy(self) -> float | None:
        vals = [v for v in (self.fwhm_x, self.fwhm_y) if v is not None]
        return sum(vals) / len(vals) if vals else None

    def mtf_xy(self) -> float | None:
        vals = [v for v in (self.mtf_nyq_x, self.mtf_nyq_y) if v is not None]
        return sum(vals) / len(vals) if vals else None


def nr_report(img: Image) -> NrReport:
    """Run every NR measurement, recording None wherever one fails."""
    rep = NrReport()
    try:
        est = estimate_snr(img)
        rep.snr_median, rep.snr_mean = est.median, est.mean
    except MeasurementUnavailable:
        pass
    for orient in ("x", "y", "oblique"):
        try:
            prof = measure_edge_response(img, orient)
        except EdgeNotFound:
            continue
        r = rer(prof)
        if not 0.0 < r:
            continue  # spurious fit on structure that is not a clean edge
        r = min(r, 1.0)
        if orient == "oblique":
            rep.rer_oblique = r
            continue
        setattr(rep, f"rer_{orient}", r)
        try:
            setattr(rep, f"fwhm_{orient}", lsf_fwhm(prof))
        except MeasurementUnavailable:
            pass
        try:
            setattr(rep, f"mtf_nyq_{orient}", mtf_at_nyquist(prof))
        except MeasurementUnavailable:
            pass
    return rep
