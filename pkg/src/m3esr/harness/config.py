"""Experiment configuration: one flat record, JSON in and out.

A config plus the package version pins everything an experiment does;
two runs from equal configs produce byte-identical result files.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace

from ..errors import ConfigError, ModeError
from ..model import MODES, ModelSpec, canonical_variant
from ..synth import MODALITY_NAMES, SceneSpec


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    # benchmark geometry
    size: int = 32
    scale: int = 4
    patch: int = 4
    channels: int = 1
    # model widths
    dim: int = 24
    attn_dim: int = 24
    router_dim: int = 24
    # data
    n_train: int = 2000
    n_holdout: int = 500
    corruption: dict = field(default_factory=dict)
    modalities: tuple = MODALITY_NAMES
    # training
    variant: str = "dynamic-temp"
    mode: str = "regression"
    steps: int = 5000
    batch: int = 16
    lr: float = 1e-3
    penalty_weight: float = 0.1
    t_train: float = 0.25
    log_every: int = 250
    # refinement mode: sampling step count
    refine_steps: int = 10
    # multi-seed experiments
    n_seeds: int = 5
    # theory experiment
    delta: float = 0.05
    rademacher_pairs: int = 4
    rademacher_steps: int = 500
    rademacher_samples: int = 64
    anchor_samples: int = 500
    # execution
    threads: int = 1

    def __post_init__(self) -> None:
        try:
            SceneSpec(self.size, self.scale, self.patch, self.channels)
        except ConfigError:
            raise
        try:
            canonical_variant(self.variant)
        except ModeError as e:
            raise ConfigError(str(e)) from None
        if self.mode not in MODES:
            raise ConfigError(
                f"unknown mode {self.mode!r}, expected one of {list(MODES)}"
            )
        for name in (
            "dim", "attn_dim", "router_dim", "n_train", "n_holdout",
            "batch", "log_every", "refine_steps", "threads", "n_seeds",
            "rademacher_pairs", "rademacher_samples", "anchor_samples",
        ):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        # zero steps is allowed: the run just evaluates the initialization
        for name in ("steps", "rademacher_steps"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                raise ConfigError(f"{name} must be >= 0, got {v!r}")
        mods = self.modalities
        if isinstance(mods, list):
            mods = tuple(mods)
            object.__setattr__(self, "modalities", mods)
        if not isinstance(mods, tuple):
            raise ConfigError(f"modalities must be a sequence, got {mods!r}")
        if len(set(mods)) != len(mods):
            raise ConfigError(f"duplicate modality in {mods!r}")
        for m in mods:
            if m not in MODALITY_NAMES:
                raise ConfigError(
                    f"unknown modality {m!r}; known: {list(MODALITY_NAMES)}"
                )
        canon = tuple(m for m in MODALITY_NAMES if m in mods)
        if canon != mods:
            object.__setattr__(self, "modalities", canon)
        if self.lr <= 0.0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.penalty_weight < 0.0:
            raise ConfigError(
                f"penalty_weight must be >= 0, got {self.penalty_weight}"
            )
        if not 0.0 <= self.t_train <= 1.0:
            raise ConfigError(f"t_train must lie in [0, 1], got {self.t_train}")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if not isinstance(self.corruption, dict):
            raise ConfigError(f"corruption must be a mapping, got {self.corruption!r}")
        for k, v in self.corruption.items():
            if k not in MODALITY_NAMES:
                raise ConfigError(
                    f"corruption names unknown modality {k!r}; "
                    f"known: {list(MODALITY_NAMES)}"
                )
            if not isinstance(v, (int, float)) or not 0.0 <= float(v) <= 1.0:
                raise ConfigError(f"corruption rate for {k!r} must be in [0, 1], got {v!r}")

    @property
    def scene(self) -> SceneSpec:
        return SceneSpec(self.size, self.scale, self.patch, self.channels)

    @property
    def model_spec(self) -> ModelSpec:
        return ModelSpec(
            scene=self.scene,
            dim=self.dim,
            attn_dim=self.attn_dim,
            router_dim=self.router_dim,
            modalities=self.modalities,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        unknown = set(kw) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        return replace(self, **kw)


_FIELD_NAMES = {f.name for f in fields(ExperimentConfig)}


def config_from_dict(d: dict) -> ExperimentConfig:
    unknown = set(d) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(**d)
    except TypeError as e:
        raise ConfigError(f"bad config: {e}") from None


def load_config(path: str) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return config_from_dict(data)


def save_config(config: ExperimentConfig, path: str) -> None:
    with open(path, "w") as f:
        json.dump(config.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
