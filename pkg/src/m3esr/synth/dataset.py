"""Sample assembly and dataset construction.

Every sample is a pure function of one 64-bit seed plus the shared
projection seed, so splits are reproducible and contamination checks
reduce to comparing seed sets.  Per-sample seeds are ``split_seed ^ idx``
and each random ingredient (scene, degradation, noise, corruption) draws
from its own derived stream.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DomainError
from ..numerics.rng import MASK64, Rng, derive
from ..parallel import parallel_map
from ..numerics.tensorio import read_tensor, write_pgm, write_tensor
from .degrade import DegradationRecord, coarse_sr, degrade, draw_record, uncertainty_map
from .grid import bilinear_upscale, patchify
from .modalities import (
    MODALITY_NAMES,
    corrupt_modality,
    extract_modalities,
    modality_projections,
)
from .scene import Scene, SceneSpec, gen_scene, render_hr

# Derivation tags.  Top level is relative to the experiment seed, sample
# level relative to the per-sample seed.
TAG_PROJ = 11
TAG_TRAIN = 12
TAG_HOLDOUT = 13

TAG_SCENE = 21
TAG_DEGRADE = 22
TAG_NOISE = 23
TAG_CORRUPT = 24

QUANTILE_BINS = 8


def quantile_onehot(values: np.ndarray, bins: int = QUANTILE_BINS) -> np.ndarray:
    """Bucket each value by its within-sample quantile, one-hot encoded.

    Edges are the interior quantiles of ``values`` itself and lookup uses
    searchsorted with side='right', so ties (including an all-constant
    input) land deterministically in a single bucket.
    """
    qs = np.arange(1, bins) / bins
    edges = np.quantile(values, qs)
    idx = np.searchsorted(edges, values, side="right")
    out = np.zeros((values.shape[0], bins))
    out[np.arange(values.shape[0]), idx] = 1.0
    return out


@dataclass(frozen=True)
class SrSample:
    seed: int
    scene: Scene
    record: DegradationRecord
    hr: np.ndarray                    # (H, W, C)
    lr: np.ndarray                    # (H/s, W/s, C)
    up: np.ndarray                    # (H, W, C) plain bilinear upscale of lr
    coarse: np.ndarray                # (H, W, C) guidance-free baseline
    patches: np.ndarray               # (N_p, patch*patch*C) of coarse
    ufeat: np.ndarray                 # (N_p, 1 + QUANTILE_BINS)
    tokens: dict[str, np.ndarray]     # name -> (N_p, dim)
    masks: dict[str, np.ndarray]      # name -> (N_p,) bool, corrupted rows


def make_sample(
    sample_seed: int,
    spec: SceneSpec,
    projections: dict[str, np.ndarray],
    corruption: dict[str, float] | None = None,
) -> SrSample:
    """Build one sample.  Stream order: scene, degradation record, noise,
    then corruption per modality in canonical name order."""
    scene = gen_scene(derive(sample_seed, TAG_SCENE), spec)
    hr = render_hr(scene)
    record = draw_record(Rng(derive(sample_seed, TAG_DEGRADE)))
    lr = degrade(hr, spec.scale, record, Rng(derive(sample_seed, TAG_NOISE)))
    up = bilinear_upscale(lr, spec.scale)
    coarse = coarse_sr(lr, spec.scale)
    patches = patchify(coarse, spec.patch)

    u = uncertainty_map(lr, spec.scale, spec.patch)
    ufeat = np.concatenate([u[:, None], quantile_onehot(u)], axis=1)

    tokens = extract_modalities(scene, lr, spec, projections)
    masks: dict[str, np.ndarray] = {}
    corruption = corruption or {}
    for bad in set(corruption) - set(MODALITY_NAMES):
        raise ConfigError(f"corruption names unknown modality {bad!r}")
    for i, name in enumerate(MODALITY_NAMES):
        rate = float(corruption.get(name, 0.0))
        if rate == 0.0:
            masks[name] = np.zeros(spec.n_patches, dtype=bool)
            continue
        rng = Rng(derive(sample_seed, TAG_CORRUPT, i + 1))
        tokens[name], masks[name] = corrupt_modality(tokens[name], rate, rng)
    return SrSample(
        seed=sample_seed & MASK64,
        scene=scene,
        record=record,
        hr=hr,
        lr=lr,
        up=up,
        coarse=coarse,
        patches=patches,
        ufeat=ufeat,
        tokens=tokens,
        masks=masks,
    )


@dataclass
class Dataset:
    """A split with everything stacked for batched training.

    ``tokens[name]`` is (N, N_p, dim); ``ufeat`` is (N, N_p, 9) holding
    the raw per-patch uncertainty followed by its within-sample quantile
    one-hot.
    """

    spec: SceneSpec
    dim: int
    split_seed: int
    proj_seed: int
    seeds: np.ndarray                  # (N,) uint64
    hr: np.ndarray                     # (N, H, W, C)
    lr: np.ndarray                     # (N, H/s, W/s, C)
    up: np.ndarray                     # (N, H, W, C) bilinear upscale of lr
    coarse: np.ndarray                 # (N, H, W, C)
    patches: np.ndarray                # (N, N_p, token_dim)
    ufeat: np.ndarray                  # (N, N_p, 1 + QUANTILE_BINS)
    tokens: dict[str, np.ndarray]      # name -> (N, N_p, dim)
    masks: dict[str, np.ndarray]       # name -> (N, N_p) bool
    corruption: dict[str, float] = field(default_factory=dict)
    records: list[DegradationRecord] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.hr.shape[0]

    def sample_view(self, i: int) -> dict[str, np.ndarray]:
        """Single-sample slices (no copies) keyed like SrSample fields."""
        view = {
            "hr": self.hr[i],
            "lr": self.lr[i],
            "up": self.up[i],
            "coarse": self.coarse[i],
            "patches": self.patches[i],
            "ufeat": self.ufeat[i],
        }
        view.update({f"tokens_{m}": self.tokens[m][i] for m in MODALITY_NAMES})
        return view


def make_dataset(
    split_seed: int,
    n: int,
    spec: SceneSpec,
    dim: int,
    proj_seed: int,
    corruption: dict[str, float] | None = None,
    threads: int = 1,
) -> Dataset:
    """Materialize ``n`` samples of a split into stacked arrays.

    Each sample is a pure function of its own seed, so ``threads`` > 1
    changes nothing but wall clock.
    """
    if n <= 0:
        raise DomainError(f"dataset size must be positive, got {n}")
    projections = modality_projections(proj_seed, spec, dim)
    seeds = np.array([(split_seed ^ i) & MASK64 for i in range(n)], dtype=np.uint64)

    hr = np.zeros((n, spec.size, spec.size, spec.channels))
    lr = np.zeros((n, spec.size // spec.scale, spec.size // spec.scale, spec.channels))
    up = np.zeros_like(hr)
    coarse = np.zeros_like(hr)
    patches = np.zeros((n, spec.n_patches, spec.token_dim))
    ufeat = np.zeros((n, spec.n_patches, 1 + QUANTILE_BINS))
    tokens = {m: np.zeros((n, spec.n_patches, dim)) for m in MODALITY_NAMES}
    masks = {m: np.zeros((n, spec.n_patches), dtype=bool) for m in MODALITY_NAMES}

    samples = parallel_map(
        lambda s: make_sample(int(s), spec, projections, corruption),
        seeds, threads,
    )
    records: list[DegradationRecord] = []
    for i, s in enumerate(samples):
        hr[i] = s.hr
        lr[i] = s.lr
        up[i] = s.up
        coarse[i] = s.coarse
        patches[i] = s.patches
        ufeat[i] = s.ufeat
        for m in MODALITY_NAMES:
            tokens[m][i] = s.tokens[m]
            masks[m][i] = s.masks[m]
        records.append(s.record)

    return Dataset(
        spec=spec,
        dim=dim,
        split_seed=split_seed & MASK64,
        proj_seed=proj_seed & MASK64,
        seeds=seeds,
        hr=hr,
        lr=lr,
        up=up,
        coarse=coarse,
        patches=patches,
        ufeat=ufeat,
        tokens=tokens,
        masks=masks,
        corruption=dict(corruption or {}),
        records=records,
    )


def split_seeds(master_seed: int) -> tuple[int, int, int]:
    """(train_seed, holdout_seed, proj_seed) derived from one master."""
    return (
        derive(master_seed, TAG_TRAIN),
        derive(master_seed, TAG_HOLDOUT),
        derive(master_seed, TAG_PROJ),
    )


def _spec_dict(spec: SceneSpec) -> dict:
    return {
        "size": spec.size,
        "scale": spec.scale,
        "patch": spec.patch,
        "channels": spec.channels,
    }


def write_dataset_dir(ds: Dataset, path: str, pgm: bool = False) -> None:
    """Persist a dataset as one directory per sample plus a root manifest.

    Layout: ``meta.json`` at the root; ``samples/<idx>/`` holding
    ``hr.m3t``, ``lr.m3t``, ``coarse.m3t``, ``patches.m3t``,
    ``ufeat.m3t``, ``modality_<name>.m3t``, ``mask_<name>.m3t``, and
    ``meta.json`` with the sample seed, scene params, and degradation
    record.  The plain upscale is recomputed from ``lr`` on load rather
    than stored.  ``pgm`` additionally writes 8-bit previews.
    """
    os.makedirs(path, exist_ok=True)
    meta = {
        "spec": _spec_dict(ds.spec),
        "dim": ds.dim,
        "split_seed": ds.split_seed,
        "proj_seed": ds.proj_seed,
        "n": ds.n,
        "corruption": ds.corruption,
        "modalities": list(MODALITY_NAMES),
    }
    with open(os.path.join(path, "meta.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")

    for i in range(ds.n):
        d = os.path.join(path, "samples", f"{i:05d}")
        os.makedirs(d, exist_ok=True)
        write_tensor(os.path.join(d, "hr.m3t"), ds.hr[i])
        write_tensor(os.path.join(d, "lr.m3t"), ds.lr[i])
        write_tensor(os.path.join(d, "coarse.m3t"), ds.coarse[i])
        write_tensor(os.path.join(d, "patches.m3t"), ds.patches[i])
        write_tensor(os.path.join(d, "ufeat.m3t"), ds.ufeat[i])
        for m in MODALITY_NAMES:
            write_tensor(os.path.join(d, f"modality_{m}.m3t"), ds.tokens[m][i])
            write_tensor(
                os.path.join(d, f"mask_{m}.m3t"), ds.masks[m][i].astype(np.float64)
            )
        rec = ds.records[i]
        smeta = {
            "seed": int(ds.seeds[i]),
            "scene_seed": int(derive(int(ds.seeds[i]), TAG_SCENE)),
            "blur_sigma": rec.blur_sigma,
            "noise_sigma": rec.noise_sigma,
            "downsample": rec.downsample,
            "quantize": rec.quantize,
        }
        with open(os.path.join(d, "meta.json"), "w") as f:
            json.dump(smeta, f, indent=2, sort_keys=True)
            f.write("\n")
        if pgm:
            write_pgm(os.path.join(d, "hr.pgm"), ds.hr[i])
            write_pgm(os.path.join(d, "coarse.pgm"), ds.coarse[i])


def load_dataset_dir(path: str) -> Dataset:
    """Rebuild a Dataset from :func:`write_dataset_dir` output."""
    with open(os.path.join(path, "meta.json")) as f:
        meta = json.load(f)
    spec = SceneSpec(**meta["spec"])
    n = meta["n"]
    dim = meta["dim"]

    seeds = np.zeros(n, dtype=np.uint64)
    hr = np.zeros((n, spec.size, spec.size, spec.channels))
    lr = np.zeros((n, spec.size // spec.scale, spec.size // spec.scale, spec.channels))
    up = np.zeros_like(hr)
    coarse = np.zeros_like(hr)
    patches = np.zeros((n, spec.n_patches, spec.token_dim))
    ufeat = np.zeros((n, spec.n_patches, 1 + QUANTILE_BINS))
    tokens = {m: np.zeros((n, spec.n_patches, dim)) for m in MODALITY_NAMES}
    masks = {m: np.zeros((n, spec.n_patches), dtype=bool) for m in MODALITY_NAMES}
    records: list[DegradationRecord] = []

    for i in range(n):
        d = os.path.join(path, "samples", f"{i:05d}")
        hr[i] = read_tensor(os.path.join(d, "hr.m3t"))
        lr[i] = read_tensor(os.path.join(d, "lr.m3t"))
        up[i] = bilinear_upscale(lr[i], spec.scale)
        coarse[i] = read_tensor(os.path.join(d, "coarse.m3t"))
        patches[i] = read_tensor(os.path.join(d, "patches.m3t"))
        ufeat[i] = read_tensor(os.path.join(d, "ufeat.m3t"))
        for m in MODALITY_NAMES:
            tokens[m][i] = read_tensor(os.path.join(d, f"modality_{m}.m3t"))
            masks[m][i] = read_tensor(os.path.join(d, f"mask_{m}.m3t")) > 0.5
        with open(os.path.join(d, "meta.json")) as f:
            smeta = json.load(f)
        seeds[i] = smeta["seed"]
        records.append(
            DegradationRecord(
                blur_sigma=smeta["blur_sigma"],
                noise_sigma=smeta["noise_sigma"],
                downsample=smeta["downsample"],
                quantize=smeta["quantize"],
            )
        )

    return Dataset(
        spec=spec,
        dim=dim,
        split_seed=meta["split_seed"],
        proj_seed=meta["proj_seed"],
        seeds=seeds,
        hr=hr,
        lr=lr,
        up=up,
        coarse=coarse,
        patches=patches,
        ufeat=ufeat,
        tokens=tokens,
        masks=masks,
        corruption=dict(meta.get("corruption", {})),
        records=records,
    )
