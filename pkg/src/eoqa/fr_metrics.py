"""Full-reference quality metrics: RMSE, PSNR, SSIM, GMSD.

Both inputs must share shape, channel count and sample range.  SSIM and GMSD
operate on luma; RMSE/PSNR use all samples.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import convolve2d

from .errors import DimensionMismatch
from .image import Image, to_grayscale

PSNR_CAP_DB = 80.0

# GMSD constants: Prewitt gradient pair and the stabilizer for 8-bit range.
_PREWITT_X = np.array([[1.0, 0.0, -1.0]] * 3) / 3.0
_PREWITT_Y = _PREWITT_X.T
_GMSD_C_8BIT = 170.0


def _check_pair(a: Image, b: Image) -> None:
    a.validate()
    b.validate()
    if a.data.shape != b.data.shape:
        raise DimensionMismatch(f"shape mismatch {a.data.shape} vs {b.data.shape}")
    if a.max_value != b.max_value:
        raise DimensionMismatch(f"range mismatch {a.max_value} vs {b.max_value}")


def rmse(a: Image, b: Image) -> float:
    _check_pair(a, b)
    return float(np.sqrt(np.mean((a.data - b.data) ** 2)))


def psnr(a: Image, b: Image) -> float:
    """20 log10(max_value / rmse), capped at 80 dB (identical images hit the cap)."""
    _check_pair(a, b)
    r = rmse(a, b)
    if r == 0.0:
        return PSNR_CAP_DB
    return float(min(PSNR_CAP_DB, 20.0 * np.log10(a.max_value / r)))


def _ssim_window() -> np.ndarray:
    k = gaussian_window_11()
    return np.outer(k, k)


def gaussian_window_11() -> np.ndarray:
    t = np.arange(-5, 6, dtype=np.float64)
    k = np.exp(-0.5 * (t / 1.5) ** 2)
    return k / k.sum()


def ssim(a: Image, b: Image) -> float:
    """Mean local SSIM over an 11x11 Gaussian window (sigma 1.5) on luma.

    Stabilizers are (0.01 L)^2 and (0.03 L)^2 for sample range L.  Local
    statistics come from 'valid' convolution, so an 11x11 image yields a
    single window.
    """
    _check_pair(a, b)
    x = to_grayscale(a).data[0]
    y = to_grayscale(b).data[0]
    L = a.max_value
    c1 = (0.01 * L) ** 2
    c2 = (0.03 * L) ** 2
    w = _ssim_window()

    mu_x = convolve2d(x, w, mode="valid")
    mu_y = convolve2d(y, w, mode="valid")
    xx = convolve2d(x * x, w, mode="valid") - mu_x * mu_x
    yy = convolve2d(y * y, w, mode="valid") - mu_y * mu_y
    xy = convolve2d(x * y, w, mode="valid") - mu_x * mu_y

    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def _half_pool(x: np.ndarray) -> np.ndarray:
    h, w = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
    x = x[:h, :w]
    return x.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def gmsd(a: Image, b: Image) -> float:
    """Standard deviation of the gradient-magnitude similarity map.

    Luma is average-pooled 2x, Prewitt gradients are taken with reflected
    borders, and GMS = (2 g_a g_b + c) / (g_a^2 + g_b^2 + c) with c scaled
    from its 8-bit value of 170 to the image's sample range.
    """
    _check_pair(a, b)
    x = _half_pool(to_grayscale(a).data[0])
    y = _half_pool(to_grayscale(b).data[0])
    c = _GMSD_C_8BIT * (a.max_value / 255.0) ** 2

    gx = np.hypot(convolve2d(x, _PREWITT_X, mode="same", boundary="symm"),
                  convolve2d(x, _PREWITT_Y, mode="same", boundary="symm"))
    gy = np.hypot(convolve2d(y, _PREWITT_X, mode="same", boundary="symm"),
                  convolve2d(y, _PREWITT_Y, mode="same", boundary="symm"))
    gms = (2.0 * gx * gy + c) / (gx * gx + gy * gy + c)
    return float(np.std(gms))
