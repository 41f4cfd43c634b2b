from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import correlate1d

from dpsim.errors import ShapeMismatchError

#: PSNR reported for (near) identical images
PSNR_CAP = 99.0

SSIM_TAPS = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError("image", a.shape, b.shape)
    return a, b


def psnr(a, b) -> float:
    """
    Peak signal-to-noise ratio in dB for images in [0, 1]
    """
    a, b = _check(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-10:
        return PSNR_CAP
    return min(PSNR_CAP, 10 * math.log10(1.0 / mse))


def _gaussian_window() -> np.ndarray:
    x = np.arange(SSIM_TAPS) - SSIM_TAPS // 2
    g = np.exp(-(x * x) / (2 * SSIM_SIGMA ** 2))
    return g / g.sum()


def _blur(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    """
    Separable Gaussian filter, cropped to the positions where the window fits
    inside the image
    """
    out = correlate1d(img, window, axis=0, mode="constant")
    out = correlate1d(out, window, axis=1, mode="constant")
    r = SSIM_TAPS // 2
    return out[r:-r, r:-r]


def _ssim_channel(a: np.ndarray, b: np.ndarray, window: np.ndarray) -> float:
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2

    mu_a = _blur(a, window)
    mu_b = _blur(b, window)
    var_a = _blur(a * a, window) - mu_a * mu_a
    var_b = _blur(b * b, window) - mu_b * mu_b
    cov = _blur(a * b, window) - mu_a * mu_b

    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(a, b) -> float:
    """
    Mean structural similarity over an 11-tap Gaussian window (sigma 1.5),
    for images in [0, 1].  Color images are scored per channel and averaged
    """
    a, b = _check(a, b)
    if a.ndim == 2:
        a, b = a[:, :, None], b[:, :, None]
    if a.shape[0] < SSIM_TAPS or a.shape[1] < SSIM_TAPS:
        raise ValueError(f"SSIM needs images at least {SSIM_TAPS}x{SSIM_TAPS}, got {a.shape[:2]}")

    window = _gaussian_window()
    return float(np.mean([_ssim_channel(a[:, :, c], b[:, :, c], window) for c in range(a.shape[2])]))
