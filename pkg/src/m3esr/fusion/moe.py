"""Gated combination of expert updates into the shared latent.

The fused latent is the input plus a per-patch, per-modality weighted sum
of expert outputs.  Static and routed gating share this one combine path,
so a router that happens to emit a constant gate is bit-identical to the
static baseline with that same constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..errors import ModeError
from ..numerics import Node, Tape, add, bcast, col, elem, scale_rows, sigmoid
from .experts import expert_forward
from .router import router_forward
from .temperature import TemperatureEval, schedule_forward

GATE_MODES = ("static", "routed")


def init_static_gate(n_modalities: int) -> dict[str, np.ndarray]:
    """Per-modality constant gate, parameterized through a sigmoid.

    Zero logits start every gate at exactly 1/2, matching the router's
    zero-initialized head.
    """
    return {"static_gate_logit": np.zeros(n_modalities)}


def static_gate_values(params: dict[str, np.ndarray]) -> np.ndarray:
    """Sigmoid of the static gate logits, off the tape."""
    return expit(params["static_gate_logit"])


@dataclass(frozen=True)
class FusionOut:
    fused: Node                                   # same shape as the latents
    gates: dict[str, Node]                        # m -> (..., N_p) in (0, 1)
    experts: dict[str, Node]                      # m -> (..., N_p, d)
    taus: "dict[str, TemperatureEval] | None"     # None when unscheduled
    gate_mode: str = "static"


def combine(z: Node, experts: list[Node], gates: list[Node]) -> Node:
    h = z
    for e, w in zip(experts, gates):
        h = add(h, scale_rows(e, w))
    return h


def fuse_forward(
    tape: Tape,
    leaves: dict[str, Node],
    z: Node,
    tokens: dict[str, Node],
    ufeat: "Node | None",
    modalities: tuple[str, ...],
    gate_mode: str,
    scheduled: bool,
    t: float = 0.5,
) -> FusionOut:
    """Run every expert and blend them into ``z`` under the chosen gating.

    ``gate_mode`` is "static" (learned per-modality constants) or "routed"
    (per-patch gates from the router, which requires ``ufeat``).  With
    ``scheduled`` each expert's attention runs at its modality's scheduled
    temperature for timestep ``t``; otherwise at temperature 1.
    """
    if gate_mode not in GATE_MODES:
        raise ModeError(f"unknown gate mode {gate_mode!r}, expected {GATE_MODES}")

    taus: "dict[str, TemperatureEval] | None" = None
    if scheduled:
        taus = {m: schedule_forward(tape, leaves, m, t) for m in modalities}

    expert_out = {
        m: expert_forward(
            tape, leaves, f"expert_{m}", z, tokens[m],
            taus[m].tau if scheduled else 1.0,
        )
        for m in modalities
    }

    gates: dict[str, Node] = {}
    if gate_mode == "routed":
        if ufeat is None:
            raise ModeError("routed gating requires the difficulty features")
        all_gates = router_forward(tape, leaves, z, ufeat)
        for j, m in enumerate(modalities):
            gates[m] = col(all_gates, j)
    else:
        gate_vec = sigmoid(leaves["static_gate_logit"])
        for j, m in enumerate(modalities):
            gates[m] = bcast(elem(gate_vec, j), z.val.shape[:-1])

    fused = combine(z, [expert_out[m] for m in modalities], [gates[m] for m in modalities])
    return FusionOut(
        fused=fused, gates=gates, experts=expert_out, taus=taus, gate_mode=gate_mode
    )
