"""Dense-tensor reverse-mode automatic differentiation over a fixed op set.

Values are float64, C-contiguous numpy arrays.  A Tape records every
operation as a node holding the forward value, the parent indices, and a
closure computing vector-Jacobian products.  backward() walks the node list
in descending index order and accumulates adjoints in ascending parent-index
order, so gradient computation is deterministic and bit-identical across
runs for identical inputs.

The op set is closed: only the functions in this module create nodes.  There
is no general broadcasting.  Ops that accept a stacked batch of samples as
an explicit leading axis say so in their docstring; everything else requires
exact shape agreement and raises DimensionError naming both shapes.

Typical use:

    tape = Tape()
    w = tape.leaf(w_arr, name="w")
    x = tape.const(x_arr)
    loss = mse(matmul(x, w), y_arr)
    grads = tape.backward(loss)      # {"w": dL/dw}

Gradients of named leaves that the loss does not depend on come back as
zeros of the leaf shape.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import erf as _erf

from ..errors import ContractError, DimensionError, DomainError

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

_LN_EPS = 1e-5  # layer_norm variance floor


def as_tensor(x) -> np.ndarray:
    """Coerce to a float64 C-contiguous array and reject non-finite input."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)
    if not np.all(np.isfinite(arr)):
        raise DomainError("tensor contains non-finite values")
    return arr


class Node:
    """Reference to one tape entry.  Cheap to copy, never mutated."""

    __slots__ = ("tape", "idx", "val")

    def __init__(self, tape: "Tape", idx: int, val: np.ndarray):
        self.tape = tape
        self.idx = idx
        self.val = val

    @property
    def shape(self):
        return self.val.shape

    @property
    def ndim(self):
        return self.val.ndim

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Node):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        return f"Node(idx={self.idx}, shape={self.val.shape})"


class Tape:
    """Append-only record of one forward computation."""

    __slots__ = ("_vals", "_parents", "_vjps", "_names", "_by_name", "check_finite")

    def __init__(self, check_finite: bool = False):
        self._vals: list[np.ndarray] = []
        self._parents: list[tuple[int, ...]] = []
        self._vjps: list[Optional[Callable]] = []
        self._names: dict[int, str] = {}
        self._by_name: dict[str, int] = {}
        self.check_finite = check_finite

    def __len__(self):
        return len(self._vals)

    def _push(self, val: np.ndarray, parents: tuple[int, ...], vjp) -> Node:
        if self.check_finite and not np.all(np.isfinite(val)):
            raise DomainError("operation produced non-finite values")
        idx = len(self._vals)
        self._vals.append(val)
        self._parents.append(parents)
        self._vjps.append(vjp)
        return Node(self, idx, val)

    def leaf(self, value, name: Optional[str] = None) -> Node:
        """Create a leaf.  Named leaves are parameters: backward reports them."""
        node = self._push(as_tensor(value), (), None)
        if name is not None:
            if name in self._by_name:
                raise ContractError(f"duplicate leaf name {name!r}")
            self._names[node.idx] = name
            self._by_name[name] = node.idx
        return node

    def const(self, value) -> Node:
        """Unnamed leaf for inputs that never need a gradient."""
        return self.leaf(value)

    def backward(self, root: Node) -> dict[str, np.ndarray]:
        """Adjoints of every named leaf with respect to a scalar root.

        Accumulation order is fixed: nodes are processed in descending index
        order and each node's parent contributions are added in the order the
        parents were declared, so results are bit-stable across runs.
        """
        if root.tape is not self:
            raise ContractError("root node belongs to a different tape")
        if root.val.size != 1:
            raise ContractError(
                f"backward root must be a scalar, got shape {root.val.shape}"
            )
        n = root.idx + 1
        adj: list[Optional[np.ndarray]] = [None] * n
        owned = [False] * n
        adj[root.idx] = np.ones_like(root.val)
        parents = self._parents
        vjps = self._vjps
        for i in range(root.idx, -1, -1):
            g = adj[i]
            if g is None:
                continue
            ps = parents[i]
            if not ps:
                continue
            contribs = vjps[i](g)
            for p, pg in zip(ps, contribs):
                if pg is None or p >= n:
                    continue
                if adj[p] is None:
                    adj[p] = pg
                elif owned[p]:
                    adj[p] += pg
                else:
                    adj[p] = adj[p] + pg
                    owned[p] = True
        out: dict[str, np.ndarray] = {}
        for idx, name in self._names.items():
            if idx < n and adj[idx] is not None:
                out[name] = adj[idx]
            else:
                out[name] = np.zeros_like(self._vals[idx])
        return out


def bind_params(tape: Tape, params: dict) -> dict[str, Node]:
    """Register every parameter as a named leaf, in sorted name order.

    Sorting fixes the tape layout, which keeps gradient accumulation order
    (and therefore training) bit-reproducible regardless of dict history.
    """
    return {name: tape.leaf(params[name], name) for name in sorted(params)}


def _need_node(x, tape: Tape) -> Node:
    if isinstance(x, Node):
        if x.tape is not tape:
            raise ContractError("operands come from different tapes")
        return x
    return tape.const(x)


def _same_tape(*nodes: Node) -> Tape:
    tape = None
    for nd in nodes:
        if isinstance(nd, Node):
            if tape is None:
                tape = nd.tape
            elif nd.tape is not tape:
                raise ContractError("operands come from different tapes")
    if tape is None:
        raise ContractError("at least one operand must be a Node")
    return tape


# ---------------------------------------------------------------------------
# arithmetic


def matmul(a: Node, b: Node) -> Node:
    """Matrix product.

    Accepts (n,k)@(k,p), stacked (B,n,k)@(k,p), and (B,n,k)@(B,k,p).
    """
    tape = _same_tape(a, b)
    a = _need_node(a, tape)
    b = _need_node(b, tape)
    av, bv = a.val, b.val
    ok = (
        (av.ndim == 2 and bv.ndim == 2 and av.shape[1] == bv.shape[0])
        or (av.ndim == 3 and bv.ndim == 2 and av.shape[2] == bv.shape[0])
        or (
            av.ndim == 3
            and bv.ndim == 3
            and av.shape[0] == bv.shape[0]
            and av.shape[2] == bv.shape[1]
        )
    )
    if not ok:
        raise DimensionError(f"matmul shapes incompatible: {av.shape} @ {bv.shape}")
    out = np.matmul(av, bv)

    def vjp(g):
        if av.ndim == 2 and bv.ndim == 2:
            return g @ bv.T, av.T @ g
        if bv.ndim == 2:
            return g @ bv.T, np.tensordot(av, g, axes=([0, 1], [0, 1]))
        return g @ bv.swapaxes(-1, -2), av.swapaxes(-1, -2) @ g

    return tape._push(out, (a.idx, b.idx), vjp)


def add(a: Node, b: Node) -> Node:
    """Elementwise sum of two tensors of identical shape."""
    tape = _same_tape(a, b)
    a = _need_node(a, tape)
    b = _need_node(b, tape)
    if a.val.shape != b.val.shape:
        raise DimensionError(f"add shapes differ: {a.val.shape} vs {b.val.shape}")
    return tape._push(a.val + b.val, (a.idx, b.idx), lambda g: (g, g))


def sub(a: Node, b: Node) -> Node:
    """Elementwise difference of two tensors of identical shape."""
    tape = _same_tape(a, b)
    a = _need_node(a, tape)
    b = _need_node(b, tape)
    if a.val.shape != b.val.shape:
        raise DimensionError(f"sub shapes differ: {a.val.shape} vs {b.val.shape}")
    return tape._push(a.val - b.val, (a.idx, b.idx), lambda g: (g, -g))


def mul(a: Node, b: Node) -> Node:
    """Elementwise (Hadamard) product, identical shapes."""
    tape = _same_tape(a, b)
    a = _need_node(a, tape)
    b = _need_node(b, tape)
    if a.val.shape != b.val.shape:
        raise DimensionError(f"mul shapes differ: {a.val.shape} vs {b.val.shape}")
    av, bv = a.val, b.val
    return tape._push(av * bv, (a.idx, b.idx), lambda g: (g * bv, g * av))


def add_b(x: Node, p: Node) -> Node:
    """Add a tensor to every slice along explicit leading stack axes.

    x has shape (*lead, *s) and p has shape s with at least one lead axis;
    the gradient of p sums over the lead axes.  This suffix-match rule is
    the only broadcast in the op set.
    """
    tape = _same_tape(x, p)
    x = _need_node(x, tape)
    p = _need_node(p, tape)
    lead = x.val.ndim - p.val.ndim
    if lead < 1 or x.val.shape[lead:] != p.val.shape:
        raise DimensionError(
            f"add_b expects (*lead, *s) + s, got {x.val.shape} and {p.val.shape}"
        )
    axes = tuple(range(lead))
    return tape._push(x.val + p.val, (x.idx, p.idx), lambda g: (g, g.sum(axis=axes)))


def scale(x: Node, c: float) -> Node:
    """Multiply by a python scalar."""
    tape = _same_tape(x)
    c = float(c)
    return tape._push(x.val * c, (x.idx,), lambda g: (g * c,))


def add_const(x: Node, c: float) -> Node:
    """Add a python scalar."""
    tape = _same_tape(x)
    return tape._push(x.val + float(c), (x.idx,), lambda g: (g,))


def smul(x: Node, s: Node) -> Node:
    """Multiply a tensor by a one-element tensor (a tape scalar)."""
    tape = _same_tape(x, s)
    x = _need_node(x, tape)
    s = _need_node(s, tape)
    if s.val.size != 1:
        raise DimensionError(f"smul scalar operand has shape {s.val.shape}")
    sv = s.val.reshape(())
    xv = x.val

    def vjp(g):
        return g * sv, np.array(np.sum(g * xv)).reshape(s.val.shape)

    return tape._push(xv * sv, (x.idx, s.idx), vjp)


def reciprocal(s: Node) -> Node:
    """Elementwise 1/s for a one-element tensor; s must be nonzero."""
    tape = _same_tape(s)
    if s.val.size != 1:
        raise DimensionError(f"reciprocal expects one element, got {s.val.shape}")
    if float(np.abs(s.val.reshape(()))) == 0.0:
        raise DomainError("reciprocal of zero")
    out = 1.0 / s.val
    return tape._push(out, (s.idx,), lambda g: (-g * out * out,))


# ---------------------------------------------------------------------------
# nonlinearities


def sigmoid(x: Node) -> Node:
    """Logistic sigmoid, overflow-safe."""
    tape = _same_tape(x)
    t = np.exp(-np.abs(x.val))
    y = np.where(x.val >= 0, 1.0 / (1.0 + t), t / (1.0 + t))
    return tape._push(y, (x.idx,), lambda g: (g * y * (1.0 - y),))


def softplus(x: Node) -> Node:
    """log(1 + exp(x)) computed without overflow."""
    tape = _same_tape(x)
    xv = x.val
    y = np.maximum(xv, 0.0) + np.log1p(np.exp(-np.abs(xv)))
    t = np.exp(-np.abs(xv))
    sig = np.where(xv >= 0, 1.0 / (1.0 + t), t / (1.0 + t))
    return tape._push(y, (x.idx,), lambda g: (g * sig,))


def exp(x: Node) -> Node:
    tape = _same_tape(x)
    y = np.exp(x.val)
    return tape._push(y, (x.idx,), lambda g: (g * y,))


def gelu(x: Node) -> Node:
    """Exact Gaussian error linear unit, 0.5 x (1 + erf(x/sqrt(2)))."""
    tape = _same_tape(x)
    xv = x.val
    cdf = 0.5 * (1.0 + _erf(xv * _INV_SQRT2))
    y = xv * cdf

    def vjp(g):
        pdf = np.exp(-0.5 * xv * xv) * _INV_SQRT_2PI
        return (g * (cdf + xv * pdf),)

    return tape._push(y, (x.idx,), vjp)


def softmax_rows(x: Node, temperature: float = 1.0) -> Node:
    """Row softmax over the last axis with explicit temperature.

    Logits are divided by the temperature before the exponential; the max of
    each row is subtracted first so the exponential never overflows.
    Temperature must be a positive float.
    """
    tape = _same_tape(x)
    tau = float(temperature)
    if not (tau > 0.0) or not math.isfinite(tau):
        raise DomainError(f"softmax temperature must be positive, got {temperature}")
    if x.val.ndim < 1:
        raise DimensionError("softmax_rows needs at least one axis")
    z = x.val / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - inner) / tau,)

    return tape._push(y, (x.idx,), vjp)


def layer_norm(x: Node, gain: Node, bias: Node) -> Node:
    """Normalize over the last axis, then apply a learned gain and bias.

    gain and bias are rank-1 of length x.shape[-1].  Variance is floored at
    1e-5 for stability.
    """
    tape = _same_tape(x, gain, bias)
    gain = _need_node(gain, tape)
    bias = _need_node(bias, tape)
    k = x.val.shape[-1]
    if gain.val.shape != (k,) or bias.val.shape != (k,):
        raise DimensionError(
            f"layer_norm gain/bias must have shape ({k},), got "
            f"{gain.val.shape} and {bias.val.shape}"
        )
    xv = x.val
    mu = xv.mean(axis=-1, keepdims=True)
    var = ((xv - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (xv - mu) * inv
    y = xhat * gain.val + bias.val

    def vjp(g):
        lead = tuple(range(g.ndim - 1))
        ggain = (g * xhat).sum(axis=lead)
        gbias = g.sum(axis=lead)
        gg = g * gain.val
        gx = inv * (
            gg
            - gg.mean(axis=-1, keepdims=True)
            - xhat * (gg * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, ggain, gbias

    return tape._push(y, (x.idx, gain.idx, bias.idx), vjp)


# ---------------------------------------------------------------------------
# reductions and losses


def mse(pred: Node, target) -> Node:
    """Mean squared error over all elements.  Target may be a plain array."""
    tape = _same_tape(pred)
    tgt = _need_node(target, tape) if isinstance(target, Node) else tape.const(target)
    if pred.val.shape != tgt.val.shape:
        raise DimensionError(
            f"mse shapes differ: {pred.val.shape} vs {tgt.val.shape}"
        )
    diff = pred.val - tgt.val
    n = diff.size
    out = np.array((diff * diff).sum() / n)

    def vjp(g):
        gs = float(g) * 2.0 / n
        gd = gs * diff
        return gd, -gd

    return tape._push(out, (pred.idx, tgt.idx), vjp)


def sum_all(x: Node) -> Node:
    """Sum of all elements, returned as a zero-rank tensor."""
    tape = _same_tape(x)
    shape = x.val.shape
    return tape._push(
        np.array(x.val.sum()), (x.idx,), lambda g: (np.full(shape, float(g)),)
    )


def mean_all(x: Node) -> Node:
    """Mean of all elements, returned as a zero-rank tensor."""
    tape = _same_tape(x)
    shape = x.val.shape
    n = x.val.size
    return tape._push(
        np.array(x.val.mean()), (x.idx,), lambda g: (np.full(shape, float(g) / n),)
    )


# ---------------------------------------------------------------------------
# shape ops


def transpose(x: Node) -> Node:
    """Swap the last two axes."""
    tape = _same_tape(x)
    if x.val.ndim < 2:
        raise DimensionError(f"transpose needs rank >= 2, got {x.val.shape}")
    return tape._push(
        np.ascontiguousarray(x.val.swapaxes(-1, -2)),
        (x.idx,),
        lambda g: (g.swapaxes(-1, -2),),
    )


def reshape(x: Node, shape: Sequence[int]) -> Node:
    """Explicit reshape; element count must match exactly."""
    tape = _same_tape(x)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.val.size:
        raise DimensionError(f"reshape {x.val.shape} -> {shape} changes element count")
    old = x.val.shape
    return tape._push(x.val.reshape(shape), (x.idx,), lambda g: (g.reshape(old),))


def permute(x: Node, axes: Sequence[int]) -> Node:
    """Explicit axis permutation."""
    tape = _same_tape(x)
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.val.ndim)):
        raise DimensionError(f"permute axes {axes} invalid for shape {x.val.shape}")
    inv = tuple(np.argsort(axes))
    return tape._push(
        np.ascontiguousarray(x.val.transpose(axes)),
        (x.idx,),
        lambda g: (np.ascontiguousarray(g.transpose(inv)),),
    )


def concat_cols(a: Node, b: Node) -> Node:
    """Concatenate along the last axis; all other extents must agree."""
    tape = _same_tape(a, b)
    a = _need_node(a, tape)
    b = _need_node(b, tape)
    if a.val.shape[:-1] != b.val.shape[:-1]:
        raise DimensionError(
            f"concat_cols leading shapes differ: {a.val.shape} vs {b.val.shape}"
        )
    ka = a.val.shape[-1]
    out = np.concatenate([a.val, b.val], axis=-1)

    def vjp(g):
        return (
            np.ascontiguousarray(g[..., :ka]),
            np.ascontiguousarray(g[..., ka:]),
        )

    return tape._push(out, (a.idx, b.idx), vjp)


def row(x: Node, i: int) -> Node:
    """Select row i of a rank-2 tensor."""
    tape = _same_tape(x)
    if x.val.ndim != 2:
        raise DimensionError(f"row expects rank 2, got {x.val.shape}")
    i = int(i)
    if not 0 <= i < x.val.shape[0]:
        raise DimensionError(f"row index {i} out of range for {x.val.shape}")
    shape = x.val.shape

    def vjp(g):
        gx = np.zeros(shape)
        gx[i] = g
        return (gx,)

    return tape._push(x.val[i].copy(), (x.idx,), vjp)


def col(x: Node, j: int) -> Node:
    """Select index j of the last axis; keeps any leading stack axes."""
    tape = _same_tape(x)
    if x.val.ndim < 2:
        raise DimensionError(f"col expects rank >= 2, got {x.val.shape}")
    j = int(j)
    if not 0 <= j < x.val.shape[-1]:
        raise DimensionError(f"col index {j} out of range for {x.val.shape}")
    shape = x.val.shape

    def vjp(g):
        gx = np.zeros(shape)
        gx[..., j] = g
        return (gx,)

    return tape._push(np.ascontiguousarray(x.val[..., j]), (x.idx,), vjp)


def elem(x: Node, i: int) -> Node:
    """Select element i of a rank-1 tensor as a (1,) tensor."""
    tape = _same_tape(x)
    if x.val.ndim != 1:
        raise DimensionError(f"elem expects rank 1, got {x.val.shape}")
    i = int(i)
    if not 0 <= i < x.val.shape[0]:
        raise DimensionError(f"elem index {i} out of range for {x.val.shape}")
    n = x.val.shape[0]

    def vjp(g):
        gx = np.zeros(n)
        gx[i] = g.reshape(())
        return (gx,)

    return tape._push(x.val[i : i + 1].copy(), (x.idx,), vjp)


def bcast(s: Node, shape: Sequence[int]) -> Node:
    """Fill a target shape with the value of a one-element tensor."""
    tape = _same_tape(s)
    if s.val.size != 1:
        raise DimensionError(f"bcast expects one element, got {s.val.shape}")
    shape = tuple(int(d) for d in shape)
    src_shape = s.val.shape

    def vjp(g):
        return (np.array(g.sum()).reshape(src_shape),)

    return tape._push(np.full(shape, float(s.val.reshape(()))), (s.idx,), vjp)


def scale_rows(x: Node, w: Node) -> Node:
    """Scale each row of x by the matching entry of w.

    x has shape (*lead, n, k) and w has shape (*lead, n); row (…, i, :) is
    multiplied by w[…, i].  Both operands receive gradients.
    """
    tape = _same_tape(x, w)
    x = _need_node(x, tape)
    w = _need_node(w, tape)
    if x.val.ndim < 2 or w.val.shape != x.val.shape[:-1]:
        raise DimensionError(
            f"scale_rows expects x (*s, n, k) with w (*s, n), got "
            f"{x.val.shape} and {w.val.shape}"
        )
    xv = x.val
    wv = w.val[..., None]

    def vjp(g):
        return g * wv, (g * xv).sum(axis=-1)

    return tape._push(xv * wv, (x.idx, w.idx), vjp)


def clamp(x: Node, lo: float, hi: float) -> Node:
    """Clip to [lo, hi].  Gradient is passed only where x lies strictly inside."""
    tape = _same_tape(x)
    lo = float(lo)
    hi = float(hi)
    if not lo < hi:
        raise DomainError(f"clamp bounds must satisfy lo < hi, got {lo}, {hi}")
    xv = x.val
    mask = (xv > lo) & (xv < hi)
    return tape._push(np.clip(xv, lo, hi), (x.idx,), lambda g: (g * mask,))


def conv3x3(x: Node, kernel: np.ndarray) -> Node:
    """Depthwise 3x3 convolution with reflect padding and a fixed kernel.

    x has shape (H, W, C) or (B, H, W, C) with H, W >= 3.  The kernel is a
    plain (3, 3) array applied identically to every channel; it is a constant
    of the operation, not a differentiable input.
    """
    tape = _same_tape(x)
    k = np.asarray(kernel, dtype=np.float64)
    if k.shape != (3, 3):
        raise DimensionError(f"conv3x3 kernel must be (3, 3), got {k.shape}")
    xv = x.val
    if xv.ndim not in (3, 4):
        raise DimensionError(f"conv3x3 expects (H,W,C) or (B,H,W,C), got {xv.shape}")
    H, W = xv.shape[-3], xv.shape[-2]
    if H < 3 or W < 3:
        raise DimensionError(f"conv3x3 needs H, W >= 3, got {xv.shape}")
    pad = [(0, 0)] * xv.ndim
    pad[-3] = (1, 1)
    pad[-2] = (1, 1)
    xp = np.pad(xv, pad, mode="reflect")
    out = np.zeros_like(xv)
    for u in range(3):
        for v in range(3):
            if k[u, v] != 0.0:
                out += k[u, v] * xp[..., u : u + H, v : v + W, :]

    def vjp(g):
        gp = np.zeros(xp.shape)
        for u in range(3):
            for v in range(3):
                if k[u, v] != 0.0:
                    gp[..., u : u + H, v : v + W, :] += k[u, v] * g
        gx = gp[..., 1 : H + 1, 1 : W + 1, :].copy()
        # fold reflect-padding contributions back onto their source pixels
        gx[..., 1, :, :] += gp[..., 0, 1 : W + 1, :]
        gx[..., H - 2, :, :] += gp[..., H + 1, 1 : W + 1, :]
        gx[..., :, 1, :] += gp[..., 1 : H + 1, 0, :]
        gx[..., :, W - 2, :] += gp[..., 1 : H + 1, W + 1, :]
        gx[..., 1, 1, :] += gp[..., 0, 0, :]
        gx[..., 1, W - 2, :] += gp[..., 0, W + 1, :]
        gx[..., H - 2, 1, :] += gp[..., H + 1, 0, :]
        gx[..., H - 2, W - 2, :] += gp[..., H + 1, W + 1, :]
        return (gx,)

    return tape._push(out, (x.idx,), vjp)
