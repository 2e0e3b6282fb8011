"""Finite-difference gradient oracle.

Central differences are the independent route against which the tape
gradients are verified.  Nothing here touches the autodiff machinery: the
objective is treated as a black-box function of a dict of parameter arrays.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional

import numpy as np

from .rng import Rng


def finite_diff(
    f: Callable[[dict[str, np.ndarray]], float],
    params: dict[str, np.ndarray],
    h: float = 1e-5,
) -> dict[str, np.ndarray]:
    """Central-difference gradient of a scalar function, every coordinate.

    f receives a fresh dict of arrays and must not mutate them.  Cost is two
    evaluations per parameter coordinate.
    """
    grads: dict[str, np.ndarray] = {}
    work = {k: v.astype(np.float64).copy() for k, v in params.items()}
    for name, arr in work.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f(work))
            flat[i] = orig - h
            fm = float(f(work))
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        grads[name] = g
    return grads


def finite_diff_sampled(
    f: Callable[[dict[str, np.ndarray]], float],
    params: dict[str, np.ndarray],
    rng: Rng,
    per_tensor: int = 8,
    h: float = 1e-5,
) -> dict[str, dict[int, float]]:
    """Central differences on a random subset of coordinates per tensor.

    Returns {name: {flat_index: derivative}}.  Used where full-coordinate
    differencing would dominate the runtime budget.
    """
    out: dict[str, dict[int, float]] = {}
    work = {k: v.astype(np.float64).copy() for k, v in params.items()}
    for name in sorted(work):
        arr = work[name]
        flat = arr.reshape(-1)
        n = flat.size
        count = min(per_tensor, n)
        picked: list[int] = []
        seen = set()
        while len(picked) < count:
            i = rng.randint(n)
            if i not in seen:
                seen.add(i)
                picked.append(i)
        entries: dict[int, float] = {}
        for i in picked:
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f(work))
            flat[i] = orig - h
            fm = float(f(work))
            flat[i] = orig
            entries[i] = (fp - fm) / (2.0 * h)
        out[name] = entries
    return out


def rel_error(a, b, floor: float = 1e-3) -> float:
    """Worst-coordinate relative error with an absolute floor.

    |a - b| / max(floor, |a|, |b|) per coordinate, maximized.  The floor
    turns the comparison into an absolute one for near-zero gradients, where
    division would amplify finite-difference rounding noise.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(floor, np.maximum(np.abs(a), np.abs(b)))
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / denom))


def compare_grads(
    analytic: dict[str, np.ndarray],
    numeric: dict[str, np.ndarray],
    floor: float = 1e-3,
    names: Optional[Iterable[str]] = None,
) -> float:
    """Worst relative error across a set of gradient tensors."""
    keys = list(names) if names is not None else sorted(analytic)
    worst = 0.0
    for k in keys:
        worst = max(worst, rel_error(analytic[k], numeric[k], floor=floor))
    return worst
