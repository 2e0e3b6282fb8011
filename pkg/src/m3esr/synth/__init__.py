"""Synthetic multi-modal super-resolution benchmark.

Scenes are procedural Voronoi mosaics rendered analytically, degraded to
low resolution with a recorded pipeline, and paired with four guidance
token streams (segments, depth, edges, appearance) plus a per-patch
difficulty score.  Everything is a pure function of 64-bit seeds.
"""

from .dataset import (
    QUANTILE_BINS,
    Dataset,
    SrSample,
    load_dataset_dir,
    make_dataset,
    make_sample,
    quantile_onehot,
    split_seeds,
    write_dataset_dir,
)
from .degrade import (
    BLUR_SIGMA_RANGE,
    DOWNSAMPLE_KINDS,
    NOISE_SIGMA_RANGE,
    DegradationRecord,
    coarse_sr,
    degrade,
    draw_record,
    gaussian_blur,
    uncertainty_map,
    unsharp_mask,
)
from .grid import (
    bilinear_downsample,
    bilinear_resize,
    bilinear_upscale,
    box_downsample,
    patchify,
    pool_patch_means,
    unpatchify,
)
from .modalities import (
    MIN_TOKEN_DIM,
    MODALITY_NAMES,
    corrupt_modality,
    edge_magnitude,
    extract_modalities,
    modality_projections,
    raw_modalities,
)
from .scene import (
    MAX_REGIONS,
    MIN_REGIONS,
    RegionTexture,
    Scene,
    SceneSpec,
    depth_map,
    gen_scene,
    region_labels,
    render_hr,
)

__all__ = [
    "BLUR_SIGMA_RANGE",
    "DOWNSAMPLE_KINDS",
    "Dataset",
    "DegradationRecord",
    "MAX_REGIONS",
    "MIN_REGIONS",
    "MIN_TOKEN_DIM",
    "MODALITY_NAMES",
    "NOISE_SIGMA_RANGE",
    "QUANTILE_BINS",
    "RegionTexture",
    "Scene",
    "SceneSpec",
    "SrSample",
    "bilinear_downsample",
    "bilinear_resize",
    "bilinear_upscale",
    "box_downsample",
    "coarse_sr",
    "corrupt_modality",
    "degrade",
    "depth_map",
    "draw_record",
    "edge_magnitude",
    "extract_modalities",
    "gaussian_blur",
    "gen_scene",
    "load_dataset_dir",
    "make_dataset",
    "make_sample",
    "modality_projections",
    "patchify",
    "pool_patch_means",
    "quantile_onehot",
    "raw_modalities",
    "region_labels",
    "render_hr",
    "split_seeds",
    "uncertainty_map",
    "unpatchify",
    "write_dataset_dir",
]
