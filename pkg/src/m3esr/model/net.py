"""The guided super-resolution network.

The network predicts the clean image from the cheap bilinear upscale:
patch pixels are embedded into a latent per patch (linear projection plus
a learned position embedding), guidance experts update the latents under
their gates, and a two-layer gelu decoder maps each latent back to patch
pixels, followed by a fixed 3x3 smoothing kernel.

Five variants share one parameter set and differ only in which parts the
forward pass consults:

    static         constant learned gate per modality, temperature 1
    dynamic        routed per-patch gates, temperature 1
    dynamic-temp   routed gates and scheduled attention temperature
    temp-only      constant gates, scheduled temperature
    no-modality    no guidance at all; embed and decode only

"dynamic-no-temp" is accepted as an alias of "dynamic" and "dynamic+temp"
as an alias of "dynamic-temp".

Two operating modes select the output head.  Regression (the default)
decodes the fused latents into the image in one deterministic pass; every
theory quantity is defined against this composition.  Refinement swaps
the decoder for a small per-patch noise predictor conditioned on the
fused latents and a time embedding; sampling lives in `refine`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, ModeError
from ..fusion import fuse_forward, init_expert, init_router, init_schedule, init_static_gate
from ..fusion.moe import FusionOut
from ..fusion.temperature import TIME_EMBED_DIM, time_embedding
from ..numerics import (
    Node,
    Rng,
    Tape,
    add,
    add_b,
    add_const,
    conv3x3,
    gelu,
    matmul,
    mean_all,
    mse,
    mul,
    permute,
    reshape,
    scale,
)
from ..synth import MODALITY_NAMES, SceneSpec
from ..synth.dataset import QUANTILE_BINS

UFEAT_DIM = 1 + QUANTILE_BINS

# Dyadic low-pass used by the decoder; integer weights keep it exact.
SMOOTH_KERNEL = np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]]) / 16.0

# name -> (gate mode or None, scheduled temperature)
VARIANTS: dict[str, tuple["str | None", bool]] = {
    "static": ("static", False),
    "dynamic": ("routed", False),
    "dynamic-temp": ("routed", True),
    "temp-only": ("static", True),
    "no-modality": (None, False),
}
VARIANT_ALIASES = {"dynamic-no-temp": "dynamic", "dynamic+temp": "dynamic-temp"}

MODES = ("regression", "refinement")


def canonical_variant(name: str) -> str:
    name = VARIANT_ALIASES.get(name, name)
    if name not in VARIANTS:
        known = sorted(VARIANTS) + sorted(VARIANT_ALIASES)
        raise ModeError(f"unknown variant {name!r}, expected one of {known}")
    return name


@dataclass(frozen=True)
class ModelSpec:
    scene: SceneSpec = field(default_factory=SceneSpec)
    dim: int = 24
    attn_dim: int = 24
    router_dim: int = 24
    modalities: tuple[str, ...] = MODALITY_NAMES


def active_param_names(
    params: dict[str, np.ndarray], variant: str, mode: str = "regression"
) -> list[str]:
    """Names of the parameters the variant's forward pass actually consults.

    Everything else sits in the checkpoint untouched: it receives zero
    gradient and never moves during training under that variant.  The
    output head follows ``mode``: the decoder in regression, the noise
    predictor in refinement.
    """
    if mode not in MODES:
        raise ModeError(f"unknown mode {mode!r}, expected one of {MODES}")
    gate_mode, scheduled = VARIANTS[canonical_variant(variant)]
    head = "dec_" if mode == "regression" else "denoiser_"
    out = []
    for name in sorted(params):
        if name.startswith("embed_") or name.startswith(head):
            out.append(name)
        elif name.startswith("expert_") and gate_mode is not None:
            out.append(name)
        elif name.startswith("router_") and gate_mode == "routed":
            out.append(name)
        elif name == "static_gate_logit" and gate_mode == "static":
            out.append(name)
        elif name.startswith("sched_") and scheduled:
            out.append(name)
    return out


def init_model(seed: int, mspec: ModelSpec) -> dict[str, np.ndarray]:
    """All parameter groups for every variant and mode, from one seed.

    Unused groups simply receive no gradient under a given variant, so a
    checkpoint always carries the full set.  The decoder output bias
    starts at mid-gray and its weight small, so the first prediction is
    near-constant.  The noise predictor's output layer starts at zero.
    """
    rng = Rng(seed)
    td = mspec.scene.token_dim
    n_p = mspec.scene.n_patches
    dim = mspec.dim
    params: dict[str, np.ndarray] = {
        "embed_w": rng.normal(td * dim).reshape(td, dim) / np.sqrt(td),
        "embed_pos": 0.02 * rng.normal(n_p * dim).reshape(n_p, dim),
        "dec_w1": rng.normal(dim * dim).reshape(dim, dim) / np.sqrt(dim),
        "dec_b1": np.zeros(dim),
        "dec_w2": 0.1 * rng.normal(dim * td).reshape(dim, td) / np.sqrt(dim),
        "dec_b2": np.full(td, 0.5),
    }
    for m in mspec.modalities:
        params.update(init_expert(rng, f"expert_{m}", mspec.dim, mspec.attn_dim))
    params.update(
        init_router(rng, mspec.dim, UFEAT_DIM, mspec.router_dim, len(mspec.modalities))
    )
    params.update(init_static_gate(len(mspec.modalities)))
    params.update(init_schedule(rng, mspec.modalities))
    params.update(
        {
            "denoiser_wx": rng.normal(td * dim).reshape(td, dim) / np.sqrt(td),
            "denoiser_wh": rng.normal(dim * dim).reshape(dim, dim) / np.sqrt(dim),
            "denoiser_wt": rng.normal(TIME_EMBED_DIM * dim).reshape(TIME_EMBED_DIM, dim)
            / np.sqrt(TIME_EMBED_DIM),
            "denoiser_b1": np.zeros(dim),
            "denoiser_w2": np.zeros((dim, td)),
            "denoiser_b2": np.zeros(td),
        }
    )
    return params


def patchify_batch(images: np.ndarray, patch: int) -> np.ndarray:
    """(B, H, W, C) -> (B, N_p, patch*patch*C), row-major patch order."""
    if images.ndim != 4:
        raise DimensionError(f"expected (B, H, W, C), got {images.shape}")
    b, h, w, c = images.shape
    if h % patch or w % patch:
        raise DimensionError(f"images {images.shape} not divisible by patch {patch}")
    gh, gw = h // patch, w // patch
    tiles = images.reshape(b, gh, patch, gw, patch, c).transpose(0, 1, 3, 2, 4, 5)
    return np.ascontiguousarray(tiles.reshape(b, gh * gw, patch * patch * c))


def depatchify(toks: Node, scene: SceneSpec) -> Node:
    """(B, N_p, patch*patch*C) -> (B, H, W, C), inverse of patchify order."""
    s = scene
    b = toks.val.shape[0]
    img = reshape(toks, (b, s.grid, s.grid, s.patch, s.patch, s.channels))
    img = permute(img, (0, 1, 3, 2, 4, 5))
    return reshape(img, (b, s.size, s.size, s.channels))


@dataclass(frozen=True)
class ModelOut:
    pred: Node                     # (B, H, W, C)
    z: Node                        # (B, N_p, dim) pre-fusion latents
    fused: Node                    # (B, N_p, dim)
    fusion: "FusionOut | None"     # None for the no-modality variant


def embed_forward(tape: Tape, leaves: dict[str, Node], patches: Node) -> Node:
    """Patch pixels -> latents: linear projection plus position embedding."""
    return add_b(matmul(patches, leaves["embed_w"]), leaves["embed_pos"])


def decode_forward(
    tape: Tape,
    leaves: dict[str, Node],
    mspec: ModelSpec,
    h: Node,
) -> Node:
    """Latents -> image: per-patch two-layer gelu map, then smoothing."""
    a = gelu(add_b(matmul(h, leaves["dec_w1"]), leaves["dec_b1"]))
    toks = add_b(matmul(a, leaves["dec_w2"]), leaves["dec_b2"])
    img = depatchify(toks, mspec.scene)
    return conv3x3(img, SMOOTH_KERNEL)


def denoiser_forward(
    tape: Tape,
    leaves: dict[str, Node],
    mspec: ModelSpec,
    x_patches: Node,
    h: Node,
    t: float,
) -> Node:
    """Predict the noise component of a corrupted residual, as an image.

    Per patch, the current noisy patch pixels and the fused latent are
    projected into one hidden layer together with a sinusoidal embedding
    of the normalized time, then mapped back to patch pixels.
    """
    temb = tape.const(time_embedding(t).reshape(1, TIME_EMBED_DIM))
    tvec = reshape(matmul(temb, leaves["denoiser_wt"]), (mspec.dim,))
    a = add(matmul(x_patches, leaves["denoiser_wx"]), matmul(h, leaves["denoiser_wh"]))
    a = add_b(a, tvec)
    a = gelu(add_b(a, leaves["denoiser_b1"]))
    toks = add_b(matmul(a, leaves["denoiser_w2"]), leaves["denoiser_b2"])
    return depatchify(toks, mspec.scene)


def model_forward(
    tape: Tape,
    leaves: dict[str, Node],
    mspec: ModelSpec,
    images: np.ndarray,
    tokens: dict[str, np.ndarray],
    ufeat: np.ndarray,
    variant: str,
    t: float = 0.5,
) -> ModelOut:
    """One regression prediction from the cheap upscale.

    ``images`` is the (B, H, W, C) bilinear upscale the model reads;
    ``tokens`` and ``ufeat`` are the stacked guidance streams for the
    same samples.
    """
    variant = canonical_variant(variant)
    gate_mode, scheduled = VARIANTS[variant]
    s = mspec.scene
    if images.ndim != 4 or images.shape[1:] != (s.size, s.size, s.channels):
        raise DimensionError(
            f"expected images (B, {s.size}, {s.size}, {s.channels}), "
            f"got {images.shape}"
        )
    patches = tape.const(patchify_batch(images, s.patch))
    z = embed_forward(tape, leaves, patches)

    fusion: "FusionOut | None" = None
    if gate_mode is None:
        fused = z
    else:
        tok_nodes = {m: tape.const(tokens[m]) for m in mspec.modalities}
        uf_node = tape.const(ufeat)
        fusion = fuse_forward(
            tape, leaves, z, tok_nodes, uf_node,
            mspec.modalities, gate_mode, scheduled, t,
        )
        fused = fusion.fused

    pred = decode_forward(tape, leaves, mspec, fused)
    return ModelOut(pred=pred, z=z, fused=fused, fusion=fusion)


def fuse_latents(
    tape: Tape,
    leaves: dict[str, Node],
    mspec: ModelSpec,
    images: np.ndarray,
    tokens: dict[str, np.ndarray],
    ufeat: np.ndarray,
    variant: str,
    t: float,
) -> tuple[Node, "FusionOut | None"]:
    """Embed and fuse without decoding; shared by both output heads."""
    variant = canonical_variant(variant)
    gate_mode, scheduled = VARIANTS[variant]
    patches = tape.const(patchify_batch(images, mspec.scene.patch))
    z = embed_forward(tape, leaves, patches)
    if gate_mode is None:
        return z, None
    tok_nodes = {m: tape.const(tokens[m]) for m in mspec.modalities}
    uf_node = tape.const(ufeat)
    fusion = fuse_forward(
        tape, leaves, z, tok_nodes, uf_node,
        mspec.modalities, gate_mode, scheduled, t,
    )
    return fusion.fused, fusion


def training_loss(
    tape: Tape,
    pred: Node,
    fusion: "FusionOut | None",
    target: np.ndarray,
    gate_target: "np.ndarray | None" = None,
    penalty_weight: float = 0.0,
    modalities: tuple[str, ...] = MODALITY_NAMES,
) -> tuple[Node, dict[str, float]]:
    """Prediction error plus the gate-mean anchoring penalty.

    ``pred`` and ``target`` are the image estimate and ground truth in
    regression mode, the noise estimate and injected noise in refinement
    mode; the penalty term is identical in both.  It pulls each
    modality's batch-mean gate toward the matching entry of
    ``gate_target`` (the static baseline's constants), which is what
    keeps routed gates mean-preserving rather than globally rescaled.
    """
    rec = mse(pred, target)
    parts = {"mse": float(rec.val), "penalty": 0.0}
    loss = rec
    routed = fusion is not None and fusion.gate_mode == "routed"
    if penalty_weight > 0.0 and gate_target is not None and routed:
        if len(gate_target) != len(modalities):
            raise DimensionError(
                f"gate target has {len(gate_target)} entries for "
                f"{len(modalities)} modalities"
            )
        pen = None
        for j, m in enumerate(modalities):
            dev = add_const(mean_all(fusion.gates[m]), -float(gate_target[j]))
            sq = mul(dev, dev)
            pen = sq if pen is None else add(pen, sq)
        weighted = scale(pen, penalty_weight)
        parts["penalty"] = float(weighted.val)
        loss = add(rec, weighted)
    parts["loss"] = float(loss.val)
    return loss, parts
