"""Reconstruction quality metrics.

PSNR uses per-sample mean squared error on the unit range, capped at
99 dB so perfect reconstructions stay finite.  SSIM is the classic
windowed form with a gaussian window; identical inputs score exactly 1.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from ..errors import DimensionError

PSNR_CAP = 99.0
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_SSIM_SIGMA = 1.5


def _as_batch(x: np.ndarray) -> np.ndarray:
    if x.ndim == 3:
        return x[None]
    if x.ndim == 4:
        return x
    raise DimensionError(f"expected (H, W, C) or (B, H, W, C), got {x.shape}")


def mse_rows(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-sample mean squared error, shape (B,)."""
    p = _as_batch(pred)
    t = _as_batch(target)
    if p.shape != t.shape:
        raise DimensionError(f"shapes differ: {pred.shape} vs {target.shape}")
    return ((p - t) ** 2).reshape(p.shape[0], -1).mean(axis=1)


def psnr(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-sample PSNR in dB against a unit data range, capped at 99."""
    m = mse_rows(pred, target)
    out = np.full(m.shape, PSNR_CAP)
    nz = m > 0.0
    out[nz] = np.minimum(10.0 * np.log10(1.0 / m[nz]), PSNR_CAP)
    return out


def _ssim_pair(a: np.ndarray, b: np.ndarray) -> float:
    c1 = _SSIM_K1**2
    c2 = _SSIM_K2**2

    def w(x):
        return gaussian_filter(x, _SSIM_SIGMA, mode="reflect", axes=(0, 1))

    mu_a = w(a)
    mu_b = w(b)
    var_a = w(a * a) - mu_a * mu_a
    var_b = w(b * b) - mu_b * mu_b
    cov = w(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float((num / den).mean())


def ssim(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-sample structural similarity on the unit range, shape (B,).

    Identical images produce exactly 1.0: every mean, variance, and
    covariance on the two sides is computed from bit-identical arrays, so
    numerator and denominator are equal floats.
    """
    p = _as_batch(pred)
    t = _as_batch(target)
    if p.shape != t.shape:
        raise DimensionError(f"shapes differ: {pred.shape} vs {target.shape}")
    return np.array([_ssim_pair(p[i], t[i]) for i in range(p.shape[0])])
