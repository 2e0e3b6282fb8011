"""HR -> LR degradation pipeline and the cheap SR baseline built on it.

The degradation is blur, then downsample, then additive noise, then
optional 8-bit quantization, then clamp to [0, 1].  Every knob lives in a
``DegradationRecord`` so a sample can state exactly how it was produced.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d

from ..errors import ConfigError, DomainError
from ..numerics.rng import Rng
from .grid import bilinear_downsample, bilinear_upscale, box_downsample, pool_patch_means

BLUR_SIGMA_RANGE = (0.4, 1.6)
NOISE_SIGMA_RANGE = (0.0, 0.04)
DOWNSAMPLE_KINDS = ("box", "bilinear")


@dataclass(frozen=True)
class DegradationRecord:
    blur_sigma: float
    noise_sigma: float
    downsample: str = "box"
    quantize: bool = False

    def __post_init__(self) -> None:
        lo, hi = BLUR_SIGMA_RANGE
        if not (lo <= self.blur_sigma <= hi):
            raise DomainError(
                f"blur sigma {self.blur_sigma} outside [{lo}, {hi}]"
            )
        lo, hi = NOISE_SIGMA_RANGE
        if not (lo <= self.noise_sigma <= hi):
            raise DomainError(
                f"noise sigma {self.noise_sigma} outside [{lo}, {hi}]"
            )
        if self.downsample not in DOWNSAMPLE_KINDS:
            raise ConfigError(
                f"unknown downsample kind {self.downsample!r}, "
                f"expected one of {DOWNSAMPLE_KINDS}"
            )


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable gaussian blur with reflect boundary handling."""
    if sigma <= 0.0:
        return img.copy()
    out = gaussian_filter1d(img, sigma, axis=0, mode="reflect")
    return gaussian_filter1d(out, sigma, axis=1, mode="reflect")


def draw_record(rng: Rng) -> DegradationRecord:
    """Sample a degradation config.  Draw order: blur, noise, kind, quantize."""
    blo, bhi = BLUR_SIGMA_RANGE
    nlo, nhi = NOISE_SIGMA_RANGE
    blur = blo + (bhi - blo) * rng.uniform(1)[0]
    noise = nlo + (nhi - nlo) * rng.uniform(1)[0]
    kind = DOWNSAMPLE_KINDS[rng.randint(len(DOWNSAMPLE_KINDS))]
    quantize = rng.uniform(1)[0] < 0.5
    return DegradationRecord(
        blur_sigma=float(blur),
        noise_sigma=float(noise),
        downsample=kind,
        quantize=bool(quantize),
    )


def degrade(
    hr: np.ndarray, scale: int, record: DegradationRecord, rng: Rng
) -> np.ndarray:
    """Apply the degradation pipeline; consumes noise draws from ``rng``."""
    img = gaussian_blur(hr, record.blur_sigma)
    if record.downsample == "box":
        img = box_downsample(img, scale)
    else:
        img = bilinear_downsample(img, scale)
    if record.noise_sigma > 0.0:
        noise = rng.normal(img.size).reshape(img.shape)
        img = img + record.noise_sigma * noise
    if record.quantize:
        img = np.rint(np.clip(img, 0.0, 1.0) * 255.0) / 255.0
    return np.clip(img, 0.0, 1.0)


def unsharp_mask(img: np.ndarray, amount: float, radius: float = 1.0) -> np.ndarray:
    """Sharpen by adding back the high-pass residual of a gaussian blur."""
    if amount < 0.0:
        raise DomainError(f"unsharp amount must be >= 0, got {amount}")
    if amount == 0.0:
        return img.copy()
    soft = gaussian_blur(img, radius)
    return img + amount * (img - soft)


def coarse_sr(lr: np.ndarray, scale: int, sharpen: float = 0.6) -> np.ndarray:
    """Guidance-free SR baseline: bilinear upscale plus mild unsharp mask.

    ``sharpen=0`` returns the bare upscale bit for bit, which the
    uncertainty map relies on.
    """
    up = bilinear_upscale(lr, scale)
    return np.clip(unsharp_mask(up, sharpen), 0.0, 1.0)


def uncertainty_map(lr: np.ndarray, scale: int, patch: int) -> np.ndarray:
    """Per-patch reconstruction difficulty, shape (N_p,).

    Mean absolute difference between the coarse SR baseline and the plain
    bilinear upscale, pooled over each patch.  Flat patches score near
    zero; textured or edge-heavy patches score high, because sharpening
    only moves pixels where the upscale lost detail.
    """
    up = bilinear_upscale(lr, scale)
    base = coarse_sr(lr, scale)
    resid = np.abs(base - up).mean(axis=-1)
    return pool_patch_means(resid, patch)
