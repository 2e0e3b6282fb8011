"""Training loop and checkpointing.

Every run is a pure function of its config: parameter init, batch order,
and data all come from derived seed streams.  Routed variants carry a
mean-anchoring penalty toward the static baseline's gate constants; when
no anchor is supplied, the static baseline is trained first from the same
config and its constants are used.

The objective follows the config mode.  Regression predicts the clean
image in one pass; refinement draws a noise level per step, corrupts the
true residual to that level, and predicts the injected noise.  Gates and
experts receive gradients either way.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError
from ..fusion import static_gate_values, tau_reference, time_embedding
from ..model import (
    ModelSpec,
    canonical_variant,
    denoise_training_pass,
    init_model,
    model_forward,
    training_loss,
)
from ..model.net import VARIANTS
from ..numerics import (
    Adam,
    Rng,
    Tape,
    bind_params,
    derive,
    read_checkpoint,
    write_checkpoint,
)
from .config import ExperimentConfig

TAG_PARAMS = 41
TAG_BATCH = 42
TAG_LEVELS = 43

_MIDPOINT_TOL = 1e-12


def schedule_coefficients(
    params: dict[str, np.ndarray], modality: str, t: float
) -> tuple[float, float]:
    """(alpha, beta) of one modality's temperature head, plain numpy."""
    e = time_embedding(t)
    pre = e @ params[f"sched_{modality}_w"] + params[f"sched_{modality}_b"]
    ab = np.logaddexp(0.0, pre)  # softplus
    return float(ab[0]), float(ab[1])


def assert_midpoint_identity(
    params: dict[str, np.ndarray], modalities: tuple[str, ...]
) -> None:
    """Tripwire: the pre-clamp temperature at t = 1/2 must be 1/2.

    The identity holds algebraically for any parameters, so a violation
    can only mean the schedule arithmetic was changed incorrectly.
    """
    for m in modalities:
        a, b = schedule_coefficients(params, m, 0.5)
        pre, _ = tau_reference(a, b, 0.5)
        if abs(pre - 0.5) > _MIDPOINT_TOL:
            raise ContractError(
                f"temperature midpoint identity broken for {m!r}: "
                f"tau_pre(0.5) = {pre!r}"
            )


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    config: ExperimentConfig
    variant: str
    gate_anchor: "np.ndarray | None"
    history: list[dict] = field(default_factory=list)
    static_params: "dict[str, np.ndarray] | None" = None


def train(
    config: ExperimentConfig,
    ds,
    variant: "str | None" = None,
    gate_anchor: "np.ndarray | None" = None,
) -> TrainResult:
    """Train one variant on a materialized training split."""
    variant = canonical_variant(variant or config.variant)
    gate_mode, scheduled = VARIANTS[variant]
    mspec = config.model_spec

    static_params = None
    if gate_mode == "routed" and gate_anchor is None and config.penalty_weight > 0.0:
        static = train(config, ds, variant="static")
        static_params = static.params
        gate_anchor = static_gate_values(static.params)

    params = init_model(derive(config.seed, TAG_PARAMS), mspec)
    opt = Adam(params, lr=config.lr)
    batch_rng = Rng(derive(config.seed, TAG_BATCH))
    level_rng = Rng(derive(config.seed, TAG_LEVELS))

    mods = mspec.modalities
    history: list[dict] = []
    for step in range(1, config.steps + 1):
        idx = (batch_rng.fill_u64(config.batch) % np.uint64(ds.n)).astype(np.int64)
        tape = Tape()
        leaves = bind_params(tape, params)
        up_b = np.ascontiguousarray(ds.up[idx])
        tokens_b = {m: np.ascontiguousarray(ds.tokens[m][idx]) for m in mods}
        ufeat_b = np.ascontiguousarray(ds.ufeat[idx])
        if config.mode == "regression":
            out = model_forward(
                tape, leaves, mspec, up_b, tokens_b, ufeat_b,
                variant, config.t_train,
            )
            pred, fusion = out.pred, out.fusion
            target = np.ascontiguousarray(ds.hr[idx])
        else:
            pred, target, fusion, _level = denoise_training_pass(
                tape, leaves, mspec, up_b,
                np.ascontiguousarray(ds.hr[idx]),
                tokens_b, ufeat_b, variant, config.refine_steps, level_rng,
            )
        loss, parts = training_loss(
            tape, pred, fusion, target,
            gate_target=gate_anchor if gate_mode == "routed" else None,
            penalty_weight=config.penalty_weight,
            modalities=mods,
        )
        grads = tape.backward(loss)
        opt.step(grads)

        if step % config.log_every == 0 or step == config.steps:
            entry = {"step": step, **{k: float(v) for k, v in parts.items()}}
            if fusion is not None:
                for m in mods:
                    entry[f"gate_{m}"] = float(fusion.gates[m].val.mean())
            if scheduled:
                assert_midpoint_identity(params, mods)
                for m in mods:
                    a, b = schedule_coefficients(params, m, config.t_train)
                    _, tau = tau_reference(a, b, config.t_train)
                    entry[f"tau_{m}"] = tau
            history.append(entry)

    return TrainResult(
        params=params,
        config=config,
        variant=variant,
        gate_anchor=None if gate_anchor is None else np.asarray(gate_anchor, dtype=np.float64),
        history=history,
        static_params=static_params,
    )


def history_csv_text(history: list[dict]) -> str:
    """Training log as CSV with a stable column order."""
    if not history:
        return "step\n"
    cols = ["step"] + sorted(k for k in history[0] if k != "step")
    lines = [",".join(cols)]
    for row in history:
        lines.append(
            ",".join(
                str(row[c]) if c == "step" else repr(float(row.get(c, float("nan"))))
                for c in cols
            )
        )
    return "\n".join(lines) + "\n"


def save_checkpoint(path: str, result: TrainResult) -> None:
    meta = {
        "config": result.config.to_dict(),
        "variant": result.variant,
        "gate_anchor": (
            None if result.gate_anchor is None else [float(x) for x in result.gate_anchor]
        ),
    }
    write_checkpoint(path, result.params, meta)


def load_checkpoint(path: str):
    """Returns (params, config, variant, gate_anchor)."""
    from .config import config_from_dict

    tensors, meta = read_checkpoint(path)
    config = config_from_dict(meta["config"])
    anchor = meta.get("gate_anchor")
    return (
        tensors,
        config,
        meta["variant"],
        None if anchor is None else np.asarray(anchor, dtype=np.float64),
    )
