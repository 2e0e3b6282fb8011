"""Deterministic numeric core: tensors, autodiff, RNG, serialization."""

from .autodiff import (
    Node,
    Tape,
    add,
    add_b,
    add_const,
    as_tensor,
    bind_params,
    bcast,
    clamp,
    col,
    concat_cols,
    conv3x3,
    elem,
    exp,
    gelu,
    layer_norm,
    matmul,
    mean_all,
    mse,
    mul,
    permute,
    reciprocal,
    reshape,
    row,
    scale,
    scale_rows,
    sigmoid,
    smul,
    softmax_rows,
    softplus,
    sub,
    sum_all,
    transpose,
)
from .optim import Adam
from .gradcheck import compare_grads, finite_diff, finite_diff_sampled, rel_error
from .rng import MASK64, Rng, derive, mix64
from .tensorio import (
    read_checkpoint,
    read_tensor,
    tensor_bytes,
    tensor_from_bytes,
    write_checkpoint,
    write_pgm,
    write_tensor,
)

__all__ = [
    "Adam",
    "Node",
    "Tape",
    "add",
    "add_b",
    "add_const",
    "as_tensor",
    "bind_params",
    "bcast",
    "clamp",
    "col",
    "compare_grads",
    "concat_cols",
    "conv3x3",
    "derive",
    "elem",
    "exp",
    "finite_diff",
    "finite_diff_sampled",
    "gelu",
    "layer_norm",
    "MASK64",
    "matmul",
    "mean_all",
    "mix64",
    "mse",
    "mul",
    "permute",
    "read_checkpoint",
    "read_tensor",
    "reciprocal",
    "rel_error",
    "reshape",
    "Rng",
    "row",
    "scale",
    "scale_rows",
    "sigmoid",
    "smul",
    "softmax_rows",
    "softplus",
    "sub",
    "sum_all",
    "tensor_bytes",
    "tensor_from_bytes",
    "transpose",
    "write_checkpoint",
    "write_pgm",
    "write_tensor",
]
