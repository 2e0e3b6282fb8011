"""Timestep-conditioned attention temperature.

Each modality owns a tiny head mapping a sinusoidal embedding of the
refinement time t in [0, 1] to two positive coefficients (a, b) through a
linear layer and softplus.  Those set c = a * exp(-b), and the temperature
interpolates

    tau_pre(t) = t * c + (1 - t) * (1 - c)

which is clamped to [TAU_MIN, TAU_MAX].  The form has one algebraic fixed
point: tau_pre(0.5) = 0.5 for every value of c, so at the midpoint all
schedules agree and carry no gradient.  Training therefore conditions on a
timestep away from 0.5 when the schedule is supposed to learn.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..numerics import (
    Node,
    Rng,
    Tape,
    add_b,
    add_const,
    clamp,
    col,
    exp,
    matmul,
    mul,
    scale,
    softplus,
)

TIME_EMBED_DIM = 8
TAU_MIN = 0.05
TAU_MAX = 20.0


def time_embedding(t: float) -> np.ndarray:
    """Sinusoidal features of t: (sin, cos) pairs at octave frequencies."""
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"timestep must lie in [0, 1], got {t}")
    out = np.zeros(TIME_EMBED_DIM)
    for k in range(TIME_EMBED_DIM // 2):
        w = np.pi * (2.0**k)
        out[2 * k] = np.sin(w * t)
        out[2 * k + 1] = np.cos(w * t)
    return out


def init_schedule(rng: Rng, modalities: tuple[str, ...]) -> dict[str, np.ndarray]:
    """Parameters for every modality's temperature head.

    Weights start small and biases at zero, so every schedule begins at
    a = b = softplus(0), i.e. c ~ 0.347: mildly sharpening as t -> 1.
    """
    params: dict[str, np.ndarray] = {}
    for m in modalities:
        w = rng.normal(TIME_EMBED_DIM * 2).reshape(TIME_EMBED_DIM, 2)
        params[f"sched_{m}_w"] = 0.1 * w / np.sqrt(TIME_EMBED_DIM)
        params[f"sched_{m}_b"] = np.zeros(2)
    return params


@dataclass(frozen=True)
class TemperatureEval:
    """Schedule evaluation at one timestep; all fields are (1,) nodes."""

    alpha: Node
    beta: Node
    pre: Node   # before clamping; 0.5 at t = 0.5 by construction
    tau: Node   # clamped to [TAU_MIN, TAU_MAX]


def schedule_forward(
    tape: Tape, leaves: dict[str, Node], modality: str, t: float
) -> TemperatureEval:
    """Evaluate one modality's temperature head on the tape."""
    e = tape.const(time_embedding(t).reshape(1, TIME_EMBED_DIM))
    h = add_b(matmul(e, leaves[f"sched_{modality}_w"]), leaves[f"sched_{modality}_b"])
    sp = softplus(h)
    alpha = col(sp, 0)
    beta = col(sp, 1)
    c = mul(alpha, exp(scale(beta, -1.0)))
    pre = add_const(scale(c, 2.0 * t - 1.0), 1.0 - t)
    tau = clamp(pre, TAU_MIN, TAU_MAX)
    return TemperatureEval(alpha=alpha, beta=beta, pre=pre, tau=tau)


def tau_reference(alpha: float, beta: float, t: float) -> tuple[float, float]:
    """Plain-float twin of :func:`schedule_forward` for oracles and logs.

    Returns (pre, clamped).
    """
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"timestep must lie in [0, 1], got {t}")
    c = alpha * np.exp(-beta)
    pre = t * c + (1.0 - t) * (1.0 - c)
    return float(pre), float(np.clip(pre, TAU_MIN, TAU_MAX))
