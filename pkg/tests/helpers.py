"""Shared test utilities: gradient-check plumbing and tiny configs."""

from __future__ import annotations

from typing import Callable

import numpy as np

from m3esr.numerics import Tape, compare_grads, finite_diff


def check_op_gradients(
    build: Callable[[Tape, dict], "object"],
    params: dict[str, np.ndarray],
    h: float = 1e-5,
    floor: float = 1e-3,
) -> float:
    """Worst relative error between tape gradients and central differences.

    `build(tape, leaves)` must construct a scalar Node from named leaves.
    The finite-difference route evaluates the same forward graph on shifted
    parameter values, so only the backward pass is under test here.
    """

    def run(values: dict[str, np.ndarray]):
        tape = Tape()
        leaves = {k: tape.leaf(v, name=k) for k, v in values.items()}
        return tape.backward(build(tape, leaves)), None

    grads, _ = run(params)

    def f(values):
        tape = Tape()
        leaves = {k: tape.leaf(v) for k, v in values.items()}
        return float(build(tape, leaves).val)

    fd = finite_diff(f, params, h=h)
    return compare_grads(grads, fd, floor=floor)
