"""Image resampling and patch bookkeeping shared across the benchmark.

All images are (H, W, C) float64.  Bilinear sampling uses half-pixel
centers with edge clamping, the convention every resampler here shares so
that upscale, downsample, and uncertainty pooling agree on alignment.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError


def _axis_weights(n_out: int, n_in: int, step: float) -> tuple[np.ndarray, ...]:
    src = (np.arange(n_out) + 0.5) * step - 0.5
    i0 = np.floor(src).astype(np.int64)
    w = src - i0
    i1 = np.clip(i0 + 1, 0, n_in - 1)
    i0 = np.clip(i0, 0, n_in - 1)
    return i0, i1, w


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample to an arbitrary size (half-pixel centers)."""
    if img.ndim != 3:
        raise DimensionError(f"expected (H, W, C) image, got shape {img.shape}")
    h, w, _ = img.shape
    iy0, iy1, wy = _axis_weights(out_h, h, h / out_h)
    ix0, ix1, wx = _axis_weights(out_w, w, w / out_w)
    top = img[iy0][:, ix0] * (1.0 - wx)[None, :, None] + img[iy0][:, ix1] * wx[None, :, None]
    bot = img[iy1][:, ix0] * (1.0 - wx)[None, :, None] + img[iy1][:, ix1] * wx[None, :, None]
    return top * (1.0 - wy)[:, None, None] + bot * wy[:, None, None]


def bilinear_upscale(img: np.ndarray, scale: int) -> np.ndarray:
    return bilinear_resize(img, img.shape[0] * scale, img.shape[1] * scale)


def bilinear_downsample(img: np.ndarray, scale: int) -> np.ndarray:
    if img.shape[0] % scale or img.shape[1] % scale:
        raise DimensionError(
            f"image {img.shape} not divisible by downsample factor {scale}"
        )
    return bilinear_resize(img, img.shape[0] // scale, img.shape[1] // scale)


def box_downsample(img: np.ndarray, scale: int) -> np.ndarray:
    """Mean over non-overlapping scale x scale blocks."""
    if img.ndim != 3:
        raise DimensionError(f"expected (H, W, C) image, got shape {img.shape}")
    h, w, c = img.shape
    if h % scale or w % scale:
        raise DimensionError(f"image {img.shape} not divisible by factor {scale}")
    return img.reshape(h // scale, scale, w // scale, scale, c).mean(axis=(1, 3))


def patchify(img: np.ndarray, patch: int) -> np.ndarray:
    """(H, W, C) -> (N_p, patch*patch*C), patches in row-major grid order."""
    if img.ndim != 3:
        raise DimensionError(f"expected (H, W, C) image, got shape {img.shape}")
    h, w, c = img.shape
    if h % patch or w % patch:
        raise DimensionError(f"image {img.shape} not divisible by patch {patch}")
    gh, gw = h // patch, w // patch
    tiles = img.reshape(gh, patch, gw, patch, c).transpose(0, 2, 1, 3, 4)
    return np.ascontiguousarray(tiles.reshape(gh * gw, patch * patch * c))


def unpatchify(tokens: np.ndarray, h: int, w: int, patch: int, channels: int) -> np.ndarray:
    """Inverse of patchify: (N_p, patch*patch*C) -> (H, W, C)."""
    gh, gw = h // patch, w // patch
    if tokens.shape != (gh * gw, patch * patch * channels):
        raise DimensionError(
            f"token block {tokens.shape} does not tile a {h}x{w}x{channels} "
            f"image with patch {patch}"
        )
    tiles = tokens.reshape(gh, gw, patch, patch, channels).transpose(0, 2, 1, 3, 4)
    return np.ascontiguousarray(tiles.reshape(h, w, channels))


def pool_patch_means(field: np.ndarray, patch: int) -> np.ndarray:
    """Mean of each patch of a scalar (H, W) field, row-major patch order."""
    if field.ndim != 2:
        raise DimensionError(f"expected (H, W) field, got shape {field.shape}")
    h, w = field.shape
    if h % patch or w % patch:
        raise DimensionError(f"field {field.shape} not divisible by patch {patch}")
    gh, gw = h // patch, w // patch
    return field.reshape(gh, patch, gw, patch).mean(axis=(1, 3)).reshape(gh * gw)
