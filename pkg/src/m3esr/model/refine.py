"""Few-step refinement sampling around the fused guidance latents.

Refinement operates on the residual between the target image and the
plain bilinear upscale.  A linear schedule

    abar(k) = 1 - k / (T + 1),   k = 0 .. T

interpolates between clean (abar(0) = 1) and mostly noise
(abar(T) = 1/(T+1)); a forward draw at level k is
x_k = sqrt(abar(k)) r + sqrt(1 - abar(k)) eps.  Sampling starts from
noise at level T and walks down.  At each level the noise predictor,
conditioned on the fused latents for normalized time t = k/T, estimates
eps; the clean-residual estimate follows by inverting the forward draw
and the state is re-noised to level k-1 with the matching posterior
spread.  t = 1 is the noisiest step.  The final level-0 state is added
to the upscale and clamped to the image range.

The fused latents are recomputed at every level because the scheduled
attention temperature depends on t.  Each step's temperatures are
re-derived off-tape from the schedule parameters and checked against
what the provider actually used.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import DomainError, ModeError
from ..fusion.temperature import tau_reference, time_embedding
from ..numerics import Tape, bind_params
from ..numerics.rng import MASK64, Rng
from .net import (
    VARIANTS,
    ModelSpec,
    canonical_variant,
    denoiser_forward,
    fuse_latents,
    patchify_batch,
)

TAU_CHECK_TOL = 1e-12


def alpha_bar(steps: int) -> np.ndarray:
    """Linear retained-signal schedule, shape (steps+1,).

    abar[0] = 1 exactly and the sequence decreases strictly; the last
    entry 1/(steps+1) stays positive so the inversion at every level is
    well posed.
    """
    if steps < 1:
        raise DomainError(f"refinement needs at least one step, got {steps}")
    k = np.arange(steps + 1, dtype=float)
    return 1.0 - k / (steps + 1.0)


def schedule_tau_value(
    params: dict[str, np.ndarray], modality: str, t: float
) -> tuple[float, float]:
    """Off-tape float twin of the scheduled temperature, (pre, clamped)."""
    e = time_embedding(t)
    raw = e @ params[f"sched_{modality}_w"] + params[f"sched_{modality}_b"]
    a, b = np.logaddexp(0.0, raw)
    return tau_reference(float(a), float(b), t)


def expected_taus(
    params: dict[str, np.ndarray], mspec: ModelSpec, variant: str, t: float
) -> dict[str, float]:
    """Temperatures the fusion pass must use at time t under ``variant``."""
    _, scheduled = VARIANTS[canonical_variant(variant)]
    if not scheduled:
        return {m: 1.0 for m in mspec.modalities}
    return {m: schedule_tau_value(params, m, t)[1] for m in mspec.modalities}


HProvider = Callable[[float], tuple[np.ndarray, dict[str, float]]]


def make_h_provider(
    params: dict[str, np.ndarray],
    mspec: ModelSpec,
    up: np.ndarray,
    tokens: dict[str, np.ndarray],
    ufeat: np.ndarray,
    variant: str,
) -> HProvider:
    """Build the per-step fused-latent source for :func:`refine_sample`.

    The returned callable maps normalized time t to (fused latent values,
    temperatures actually used per modality).  Gating does not depend on
    t, but the expert attention does whenever the variant schedules its
    temperature, so the whole fusion is rerun per call.
    """
    variant = canonical_variant(variant)

    def provider(t: float) -> tuple[np.ndarray, dict[str, float]]:
        tape = Tape()
        leaves = bind_params(tape, params)
        fused, fusion = fuse_latents(
            tape, leaves, mspec, up, tokens, ufeat, variant, t
        )
        if fusion is None:
            taus: dict[str, float] = {}
        elif fusion.taus is None:
            taus = {m: 1.0 for m in mspec.modalities}
        else:
            taus = {m: float(te.tau.val[0]) for m, te in fusion.taus.items()}
        return fused.val, taus

    return provider


@dataclass(frozen=True)
class SampleStep:
    k: int
    t: float
    taus: dict[str, float]             # temperature per modality at this step
    eps_mean_abs: float                # mean |predicted noise|
    estimate: "np.ndarray | None"      # clip(up + r0_hat), kept on request


@dataclass(frozen=True)
class SampleTrace:
    steps: tuple[SampleStep, ...]


def refine_sample(
    up: np.ndarray,
    h_provider: HProvider,
    params: dict[str, np.ndarray],
    mspec: ModelSpec,
    steps: int,
    seed: int,
    variant: str = "dynamic-temp",
    noise_scale: float = 1.0,
    keep_states: bool = False,
) -> tuple[np.ndarray, SampleTrace]:
    """Draw one batch of refined images by ancestral sampling.

    ``up`` is the (B, H, W, C) bilinear upscale; the sampler works on the
    residual against it and returns clip(up + residual, 0, 1).  All
    stochastic draws come from the counter stream of ``seed``; the same
    seed always reproduces the run bit for bit.  ``noise_scale=0``
    silences both the initial draw and the per-step kicks, which makes a
    single step with a zero noise predictor return ``up`` unchanged.
    """
    if up.ndim != 4:
        raise DomainError(f"expected (B, H, W, C) upscale, got {up.shape}")
    abar = alpha_bar(steps)
    rng = Rng(seed & MASK64)
    x = noise_scale * np.sqrt(1.0 - abar[steps]) * rng.normal(up.size).reshape(up.shape)

    log: list[SampleStep] = []
    for k in range(steps, 0, -1):
        t = k / steps
        h_vals, taus = h_provider(t)
        want = expected_taus(params, mspec, variant, t)
        for m, tau in taus.items():
            if abs(tau - want[m]) > TAU_CHECK_TOL:
                raise ModeError(
                    f"step {k}: modality {m!r} attention ran at temperature "
                    f"{tau!r} but the schedule gives {want[m]!r} for t={t!r}"
                )

        tape = Tape()
        leaves = bind_params(tape, params)
        xp = tape.const(patchify_batch(x, mspec.scene.patch))
        eps_hat = denoiser_forward(
            tape, leaves, mspec, xp, tape.const(h_vals), t
        ).val

        a, p = abar[k], abar[k - 1]
        r0 = (x - np.sqrt(1.0 - a) * eps_hat) / np.sqrt(a)
        var = (1.0 - p) / (1.0 - a) * (1.0 - a / p)
        mean_dir = np.sqrt(max(1.0 - p - var, 0.0))
        x = np.sqrt(p) * r0 + mean_dir * eps_hat
        if k > 1:
            x = x + noise_scale * np.sqrt(var) * rng.normal(x.size).reshape(x.shape)

        log.append(
            SampleStep(
                k=k,
                t=t,
                taus=dict(taus),
                eps_mean_abs=float(np.abs(eps_hat).mean()),
                estimate=(
                    np.clip(up + r0, 0.0, 1.0) if keep_states else None
                ),
            )
        )

    out = np.clip(up + x, 0.0, 1.0)
    return out, SampleTrace(steps=tuple(log))


def denoise_training_pass(
    tape: Tape,
    leaves: dict,
    mspec: ModelSpec,
    up: np.ndarray,
    hr: np.ndarray,
    tokens: dict[str, np.ndarray],
    ufeat: np.ndarray,
    variant: str,
    steps: int,
    rng: Rng,
):
    """One denoising-objective forward for a training batch.

    Draws a level k uniform in 1..steps (shared by the batch, so the
    scheduled temperature stays a scalar), corrupts the true residual to
    that level, and predicts the injected noise from the corrupted state
    and the fused latents.  Returns (eps_pred node, eps target, fusion,
    k) so the trainer can reuse the gate penalty unchanged.
    """
    abar = alpha_bar(steps)
    k = 1 + rng.randint(steps)
    t = k / steps
    eps = rng.normal(up.size).reshape(up.shape)
    r = hr - up
    x = np.sqrt(abar[k]) * r + np.sqrt(1.0 - abar[k]) * eps
    fused, fusion = fuse_latents(tape, leaves, mspec, up, tokens, ufeat, variant, t)
    xp = tape.const(patchify_batch(x, mspec.scene.patch))
    eps_pred = denoiser_forward(tape, leaves, mspec, xp, fused, t)
    return eps_pred, eps, fusion, k
