"""Uncertainty-routed multi-modal fusion with scheduled attention sharpness."""

from .experts import expert_forward, init_expert
from .moe import (
    GATE_MODES,
    FusionOut,
    combine,
    fuse_forward,
    init_static_gate,
    static_gate_values,
)
from .router import ROUTER_BLOCKS, init_router, router_forward
from .temperature import (
    TAU_MAX,
    TAU_MIN,
    TIME_EMBED_DIM,
    TemperatureEval,
    init_schedule,
    schedule_forward,
    tau_reference,
    time_embedding,
)

__all__ = [
    "FusionOut",
    "GATE_MODES",
    "ROUTER_BLOCKS",
    "TAU_MAX",
    "TAU_MIN",
    "TIME_EMBED_DIM",
    "TemperatureEval",
    "combine",
    "expert_forward",
    "fuse_forward",
    "init_expert",
    "init_router",
    "init_schedule",
    "init_static_gate",
    "router_forward",
    "schedule_forward",
    "static_gate_values",
    "tau_reference",
    "time_embedding",
]
