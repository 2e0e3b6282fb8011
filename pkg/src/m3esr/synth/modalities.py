"""Guidance modality extraction and controlled corruption.

Four per-patch token streams accompany each sample: segment histograms,
depth, edge strength, and appearance features from the cheap upscale.
Raw features are mapped into a shared d-dimensional token space by frozen
random linear projections so all downstream code sees one token shape.
The projections have no bias: an all-zero raw feature stays an all-zero
token.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import sobel

from ..errors import DimensionError, DomainError
from ..numerics.rng import Rng, derive
from .degrade import coarse_sr
from .grid import patchify, pool_patch_means
from .scene import MAX_REGIONS, Scene, SceneSpec, depth_map, region_labels, render_hr

MODALITY_NAMES = ("seg", "depth", "edge", "feat")
MIN_TOKEN_DIM = 8


def edge_magnitude(img: np.ndarray) -> np.ndarray:
    """Normalized Sobel gradient magnitude of the channel-mean image."""
    luma = img.mean(axis=-1)
    gx = sobel(luma, axis=1, mode="reflect")
    gy = sobel(luma, axis=0, mode="reflect")
    return np.sqrt(gx * gx + gy * gy) / 4.0


def raw_modalities(scene: Scene, lr: np.ndarray, spec: SceneSpec) -> dict[str, np.ndarray]:
    """Per-patch raw features, one (N_p, raw_dim) array per modality.

    seg   normalized histogram of region labels inside each HR patch
    depth mean region depth per patch
    edge  mean Sobel magnitude of the clean HR render per patch
    feat  pixels of the coarse SR baseline, per patch
    """
    labels = region_labels(scene, spec.size)
    gh = spec.grid
    p = spec.patch
    label_tiles = labels.reshape(gh, p, gh, p).transpose(0, 2, 1, 3).reshape(spec.n_patches, p * p)
    seg = np.zeros((spec.n_patches, MAX_REGIONS))
    for b in range(MAX_REGIONS):
        seg[:, b] = (label_tiles == b).mean(axis=1)

    depth = pool_patch_means(depth_map(scene, spec.size), p).reshape(-1, 1)
    edge = pool_patch_means(edge_magnitude(render_hr(scene)), p).reshape(-1, 1)

    feat = patchify(coarse_sr(lr, spec.scale), p)
    return {"seg": seg, "depth": depth, "edge": edge, "feat": feat}


def modality_projections(proj_seed: int, spec: SceneSpec, dim: int) -> dict[str, np.ndarray]:
    """Frozen (raw_dim, dim) projection per modality, seeded by ``proj_seed``."""
    if dim < MIN_TOKEN_DIM:
        raise DimensionError(
            f"modality token dim must be >= {MIN_TOKEN_DIM}, got {dim}"
        )
    raw_dims = {
        "seg": MAX_REGIONS,
        "depth": 1,
        "edge": 1,
        "feat": spec.token_dim,
    }
    out = {}
    for i, name in enumerate(MODALITY_NAMES):
        rd = raw_dims[name]
        rng = Rng(derive(proj_seed, i + 1))
        w = rng.normal(rd * dim).reshape(rd, dim) / np.sqrt(rd)
        out[name] = w
    return out


def extract_modalities(
    scene: Scene,
    lr: np.ndarray,
    spec: SceneSpec,
    projections: dict[str, np.ndarray],
    keep_raw: bool = False,
) -> dict[str, np.ndarray]:
    """Project raw per-patch features into token space.

    Returns {name: (N_p, dim)}.  With ``keep_raw`` the un-projected
    features are included under ``raw_<name>`` keys.
    """
    raw = raw_modalities(scene, lr, spec)
    tokens: dict[str, np.ndarray] = {}
    for name in MODALITY_NAMES:
        tokens[name] = raw[name] @ projections[name]
    if keep_raw:
        for name in MODALITY_NAMES:
            tokens[f"raw_{name}"] = raw[name]
    return tokens


def corrupt_modality(
    tokens: np.ndarray, rate: float, rng: Rng
) -> tuple[np.ndarray, np.ndarray]:
    """Replace a fraction of token rows with rows transplanted from other
    positions of the same stream.

    Each row is corrupted independently with probability ``rate``; a
    corrupted row i receives the ORIGINAL row j for a uniformly random
    j != i, so swapped-in content is always clean.  Returns the corrupted
    copy and the boolean mask of replaced rows.
    """
    if not 0.0 <= rate <= 1.0:
        raise DomainError(f"corruption rate {rate} outside [0, 1]")
    if tokens.ndim != 2:
        raise DimensionError(f"expected (N_p, dim) tokens, got {tokens.shape}")
    n = tokens.shape[0]
    out = tokens.copy()
    if rate == 0.0 or n < 2:
        return out, np.zeros(n, dtype=bool)
    mask = rng.uniform(n) < rate
    for i in np.flatnonzero(mask):
        j = int(rng.randint(n - 1))
        if j >= i:
            j += 1
        out[i] = tokens[j]
    return out, mask
