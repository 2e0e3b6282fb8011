"""Guided SR network: embedding, gated fusion, decoding, refinement."""

from .net import (
    active_param_names,
    MODES,
    SMOOTH_KERNEL,
    UFEAT_DIM,
    VARIANT_ALIASES,
    VARIANTS,
    ModelOut,
    ModelSpec,
    canonical_variant,
    decode_forward,
    denoiser_forward,
    depatchify,
    embed_forward,
    fuse_latents,
    init_model,
    model_forward,
    patchify_batch,
    training_loss,
)
from .refine import (
    SampleStep,
    SampleTrace,
    alpha_bar,
    denoise_training_pass,
    expected_taus,
    make_h_provider,
    refine_sample,
    schedule_tau_value,
)

__all__ = [
    "active_param_names",
    "alpha_bar",
    "MODES",
    "ModelOut",
    "ModelSpec",
    "SMOOTH_KERNEL",
    "SampleStep",
    "SampleTrace",
    "UFEAT_DIM",
    "VARIANTS",
    "VARIANT_ALIASES",
    "canonical_variant",
    "decode_forward",
    "denoise_training_pass",
    "denoiser_forward",
    "depatchify",
    "embed_forward",
    "expected_taus",
    "fuse_latents",
    "init_model",
    "make_h_provider",
    "model_forward",
    "patchify_batch",
    "refine_sample",
    "schedule_tau_value",
    "training_loss",
]
