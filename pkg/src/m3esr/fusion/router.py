"""Uncertainty-aware expert router.

The router sees, for every patch, the shared latent together with the
per-patch difficulty score and its quantile one-hot, mixes patches through
two small pre-norm attention blocks, and emits one gate in (0, 1) per
modality per patch.  A trained router concentrates guidance where the
cheap upscale is least trustworthy.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from ..numerics import (
    Node,
    Rng,
    Tape,
    add,
    add_b,
    concat_cols,
    gelu,
    layer_norm,
    matmul,
    scale,
    sigmoid,
    softmax_rows,
    transpose,
)

ROUTER_BLOCKS = 2


def init_router(
    rng: Rng,
    dim: int,
    ufeat_dim: int,
    router_dim: int,
    n_modalities: int,
) -> dict[str, np.ndarray]:
    def w(rows: int, cols: int) -> np.ndarray:
        return rng.normal(rows * cols).reshape(rows, cols) / np.sqrt(rows)

    p: dict[str, np.ndarray] = {
        "router_win": w(dim + ufeat_dim, router_dim),
        "router_bin": np.zeros(router_dim),
        # zero head: every gate starts exactly at sigmoid(0) = 1/2
        "router_wout": np.zeros((router_dim, n_modalities)),
        "router_bout": np.zeros(n_modalities),
    }
    for i in range(ROUTER_BLOCKS):
        b = f"router_blk{i}"
        p[f"{b}_ln1_g"] = np.ones(router_dim)
        p[f"{b}_ln1_b"] = np.zeros(router_dim)
        p[f"{b}_wq"] = w(router_dim, router_dim)
        p[f"{b}_wk"] = w(router_dim, router_dim)
        p[f"{b}_wv"] = w(router_dim, router_dim)
        p[f"{b}_wo"] = w(router_dim, router_dim)
        p[f"{b}_ln2_g"] = np.ones(router_dim)
        p[f"{b}_ln2_b"] = np.zeros(router_dim)
        p[f"{b}_mlp_w1"] = w(router_dim, 2 * router_dim)
        p[f"{b}_mlp_b1"] = np.zeros(2 * router_dim)
        p[f"{b}_mlp_w2"] = w(2 * router_dim, router_dim)
        p[f"{b}_mlp_b2"] = np.zeros(router_dim)
    return p


def _self_attention(leaves: dict[str, Node], block: str, x: Node) -> Node:
    dr = leaves[f"{block}_wq"].val.shape[0]
    q = matmul(x, leaves[f"{block}_wq"])
    k = matmul(x, leaves[f"{block}_wk"])
    v = matmul(x, leaves[f"{block}_wv"])
    attn = softmax_rows(scale(matmul(q, transpose(k)), 1.0 / np.sqrt(dr)))
    return matmul(matmul(attn, v), leaves[f"{block}_wo"])


def router_forward(tape: Tape, leaves: dict[str, Node], z: Node, ufeat: Node) -> Node:
    """Gates for every modality: (..., N_p, n_modalities) in (0, 1)."""
    if z.val.shape[:-1] != ufeat.val.shape[:-1]:
        raise DimensionError(
            f"latents {z.val.shape} and difficulty features {ufeat.val.shape} "
            "must agree on every axis but the last"
        )
    x = add_b(matmul(concat_cols(z, ufeat), leaves["router_win"]), leaves["router_bin"])
    for i in range(ROUTER_BLOCKS):
        b = f"router_blk{i}"
        h = layer_norm(x, leaves[f"{b}_ln1_g"], leaves[f"{b}_ln1_b"])
        x = add(x, _self_attention(leaves, b, h))
        h = layer_norm(x, leaves[f"{b}_ln2_g"], leaves[f"{b}_ln2_b"])
        h = gelu(add_b(matmul(h, leaves[f"{b}_mlp_w1"]), leaves[f"{b}_mlp_b1"]))
        h = add_b(matmul(h, leaves[f"{b}_mlp_w2"]), leaves[f"{b}_mlp_b2"])
        x = add(x, h)
    logits = add_b(matmul(x, leaves["router_wout"]), leaves["router_bout"])
    return sigmoid(logits)
