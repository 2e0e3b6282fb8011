"""Per-sample quantities for the routing-gain analysis.

Everything here is anchored on the "staticized" network: the trained
dynamic network with its per-patch gates replaced by the static baseline's
constants.  Writing phi(h) for the reconstruction loss as a function of
the fused latents, the anchor point is

    h_static = z + sum_m wbar_m * E_m(z, tokens_m)

and a patch-modality pair's marginal contribution is the negative inner
product of the expert update with the loss gradient there:

    delta[i, m] = - < dphi/dh_i (h_static), E_m(z, tokens_m)_i >

To first order, switching patch i's gate from wbar_m to w changes the loss
by -(w - wbar_m) * delta[i, m]; helpful guidance at a patch shows up as a
positive delta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError
from ..model import ModelSpec, canonical_variant, decode_forward, embed_forward
from ..model.net import VARIANTS
from ..numerics import Tape, bind_params, mse
from ..fusion import fuse_forward


@dataclass(frozen=True)
class SampleAnchors:
    """Anchor data for one sample."""

    gates: dict[str, np.ndarray]     # m -> (N_p,) dynamic router gates
    deltas: dict[str, np.ndarray]    # m -> (N_p,) marginal contributions
    experts: dict[str, np.ndarray]   # m -> (N_p, d) expert updates
    grad_h: np.ndarray               # (N_p, d) dphi/dh at the static anchor
    h_static: np.ndarray             # (N_p, d)
    h_dynamic: np.ndarray            # (N_p, d)
    phi_static: float
    phi_dynamic: float


def phi_at(
    params: dict[str, np.ndarray],
    mspec: ModelSpec,
    h: np.ndarray,
    base: np.ndarray,
    hr: np.ndarray,
) -> float:
    """Reconstruction loss of the decoder at explicit latents ``h``."""
    tape = Tape()
    leaves = bind_params(tape, params)
    pred = decode_forward(tape, leaves, mspec, tape.const(h[None]), base[None])
    return float(mse(pred, hr[None]).val)


def sample_anchors(
    params: dict[str, np.ndarray],
    mspec: ModelSpec,
    image: np.ndarray,
    tokens: dict[str, np.ndarray],
    ufeat: np.ndarray,
    hr: np.ndarray,
    gate_anchor: np.ndarray,
    variant: str = "dynamic",
    t: float = 0.25,
) -> SampleAnchors:
    """Compute gates, expert updates, and marginal contributions for one
    sample.

    ``gate_anchor`` holds the static constants wbar (one per modality, in
    the model's modality order).  ``variant`` picks how experts and gates
    are evaluated (it must be a routed variant); the static anchor always
    reuses that variant's expert outputs, only the gates change.
    """
    variant = canonical_variant(variant)
    gate_mode, scheduled = VARIANTS[variant]
    if gate_mode != "routed":
        raise DimensionError(
            f"anchors need a routed variant to supply dynamic gates, got {variant!r}"
        )
    mods = mspec.modalities
    if gate_anchor.shape != (len(mods),):
        raise DimensionError(
            f"gate anchor shape {gate_anchor.shape} does not match "
            f"{len(mods)} modalities"
        )

    # Forward pass (values only) for z, expert updates, and router gates.
    tape = Tape()
    leaves = bind_params(tape, params)
    from ..model.net import patchify_batch

    patches = tape.const(patchify_batch(image[None], mspec.scene.patch))
    z = embed_forward(tape, leaves, patches)
    fusion = fuse_forward(
        tape, leaves, z,
        {m: tape.const(tokens[m][None]) for m in mods},
        tape.const(ufeat[None]),
        mods, "routed", scheduled, t,
    )
    z_val = z.val[0]
    experts = {m: fusion.experts[m].val[0].copy() for m in mods}
    gates = {m: fusion.gates[m].val[0].copy() for m in mods}

    # accumulate in the same order as the fused combine, so gates that
    # happen to equal the anchor reproduce h_dynamic bit for bit
    h_static = z_val
    for j, m in enumerate(mods):
        h_static = h_static + gate_anchor[j] * experts[m]
    h_dynamic = fusion.fused.val[0]

    # Loss gradient with respect to the latents at the static anchor.
    gtape = Tape()
    h_leaf = gtape.leaf(h_static[None], "h")
    gleaves = bind_params(gtape, params)
    pred = decode_forward(gtape, gleaves, mspec, h_leaf, image[None])
    phi_static_node = mse(pred, hr[None])
    grad_h = gtape.backward(phi_static_node)["h"][0]

    deltas = {m: -np.sum(grad_h * experts[m], axis=1) for m in mods}
    return SampleAnchors(
        gates=gates,
        deltas=deltas,
        experts=experts,
        grad_h=grad_h,
        h_static=h_static,
        h_dynamic=h_dynamic,
        phi_static=float(phi_static_node.val),
        phi_dynamic=phi_at(params, mspec, h_dynamic, image, hr),
    )


@dataclass(frozen=True)
class AnchorSet:
    """Anchor data stacked over a dataset split."""

    gates: dict[str, np.ndarray]    # m -> (N, N_p)
    deltas: dict[str, np.ndarray]   # m -> (N, N_p)
    phi_static: np.ndarray          # (N,)
    phi_dynamic: np.ndarray         # (N,)
    gate_anchor: np.ndarray         # (M,)
    t: float


def dataset_anchors(
    params: dict[str, np.ndarray],
    mspec: ModelSpec,
    ds,
    gate_anchor: np.ndarray,
    variant: str = "dynamic",
    t: float = 0.25,
    limit: "int | None" = None,
) -> AnchorSet:
    """Anchors for the first ``limit`` samples of a dataset (all by default)."""
    n = ds.n if limit is None else min(int(limit), ds.n)
    mods = mspec.modalities
    np_count = mspec.scene.n_patches
    gates = {m: np.zeros((n, np_count)) for m in mods}
    deltas = {m: np.zeros((n, np_count)) for m in mods}
    phi_s = np.zeros(n)
    phi_d = np.zeros(n)
    for i in range(n):
        a = sample_anchors(
            params, mspec, ds.coarse[i],
            {m: ds.tokens[m][i] for m in mods},
            ds.ufeat[i], ds.hr[i], gate_anchor, variant, t,
        )
        for m in mods:
            gates[m][i] = a.gates[m]
            deltas[m][i] = a.deltas[m]
        phi_s[i] = a.phi_static
        phi_d[i] = a.phi_dynamic
    return AnchorSet(
        gates=gates,
        deltas=deltas,
        phi_static=phi_s,
        phi_dynamic=phi_d,
        gate_anchor=gate_anchor.copy(),
        t=t,
    )
