"""Per-modality cross-attention experts.

An expert reads the shared patch latents (as keys and values) through the
lens of its modality tokens (as queries) and emits an additive update in
latent space.  Temperature divides the attention logits after the usual
1/sqrt(d_a) scaling; it may be a plain float or a one-element tape node,
so scheduled temperatures stay differentiable.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from ..numerics import (
    Node,
    Rng,
    Tape,
    matmul,
    reciprocal,
    scale,
    smul,
    softmax_rows,
    transpose,
)


def init_expert(rng: Rng, prefix: str, dim: int, attn_dim: int) -> dict[str, np.ndarray]:
    def w(rows: int, cols: int) -> np.ndarray:
        return rng.normal(rows * cols).reshape(rows, cols) / np.sqrt(rows)

    return {
        f"{prefix}_wq": w(dim, attn_dim),
        f"{prefix}_wk": w(dim, attn_dim),
        f"{prefix}_wv": w(dim, attn_dim),
        f"{prefix}_wo": w(attn_dim, dim),
    }


def expert_forward(
    tape: Tape,
    leaves: dict[str, Node],
    prefix: str,
    z: Node,
    tokens: Node,
    tau: "Node | float" = 1.0,
) -> Node:
    """Cross-attention update, shape of ``z``.

    ``z`` and ``tokens`` are (N_p, d) or stacked (B, N_p, d); queries come
    from the modality tokens, keys and values from the latents.
    """
    if z.val.shape != tokens.val.shape:
        raise DimensionError(
            f"latents {z.val.shape} and modality tokens {tokens.val.shape} "
            "must have the same shape"
        )
    attn_dim = leaves[f"{prefix}_wq"].val.shape[1]
    q = matmul(tokens, leaves[f"{prefix}_wq"])
    k = matmul(z, leaves[f"{prefix}_wk"])
    v = matmul(z, leaves[f"{prefix}_wv"])
    scores = scale(matmul(q, transpose(k)), 1.0 / np.sqrt(attn_dim))
    if isinstance(tau, Node):
        scores = smul(scores, reciprocal(tau))
        attn = softmax_rows(scores)
    else:
        attn = softmax_rows(scores, float(tau))
    return matmul(matmul(attn, v), leaves[f"{prefix}_wo"])
