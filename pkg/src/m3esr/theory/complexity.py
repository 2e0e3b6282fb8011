"""Capacity estimates for the generalization bound.

Two complementary measures: an empirical Rademacher estimate obtained by
gradient ascent on sign-weighted per-sample losses, and a crude spectral
envelope (the product of spectral norms of the active weight matrices).
The bound also carries the usual confidence radius sqrt(ln(1/delta)/2N).

The Rademacher estimator uses antithetic sign pairs: the ascents for sigma
and -sigma start from the same trained parameters, and each side reports
the best objective value it saw (which is at least the starting value).
The two starting values cancel, so every pair mean is nonnegative by
construction, and a family with nothing to ascend (no trainable tensors)
reports exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, DomainError, InsufficientDataError
from ..model import ModelSpec, model_forward
from ..numerics import Adam, Rng, Tape, bind_params, derive, mul, sub, sum_all


def spectral_norm(w: np.ndarray) -> float:
    if w.ndim != 2:
        raise DimensionError(f"spectral norm needs a matrix, got shape {w.shape}")
    return float(np.linalg.svd(w, compute_uv=False)[0])


def weight_norm_proxy(
    params: dict[str, np.ndarray], names: "list[str] | None" = None
) -> float:
    """Product of spectral norms over the named weight matrices.

    Rank-1 tensors (biases, gains) are skipped.  With ``names`` omitted,
    every rank-2 parameter participates.  This is a loose envelope on the
    network's Lipschitz constant, reported alongside the Rademacher
    estimate rather than combined with it.
    """
    if names is None:
        names = sorted(k for k, v in params.items() if v.ndim == 2)
    prod = 1.0
    for name in names:
        v = params[name]
        if v.ndim != 2:
            continue
        prod *= spectral_norm(v)
    return float(prod)


def confidence_term(delta: float, n: int) -> float:
    """sqrt(ln(1/delta) / (2 n)), the usual high-probability radius."""
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie strictly inside (0, 1), got {delta}")
    if n < 1:
        raise InsufficientDataError(f"need at least one sample, got {n}")
    return float(np.sqrt(np.log(1.0 / delta) / (2.0 * n)))


@dataclass(frozen=True)
class RademacherReport:
    estimate: float                       # mean of the pair means
    pair_means: tuple[float, ...]
    sup_values: tuple[tuple[float, float], ...]   # (sigma, -sigma) sups
    pairs: int
    steps: int
    n: int
    n_trainable: int


def _signed_loss_objective(
    params: dict[str, np.ndarray],
    mspec: ModelSpec,
    images: np.ndarray,
    tokens: dict[str, np.ndarray],
    ufeat: np.ndarray,
    hr: np.ndarray,
    weights: np.ndarray,
    variant: str,
    t: float,
):
    """(1/n) sum_k sigma_k * mse_k as a tape scalar, plus the tape."""
    tape = Tape()
    leaves = bind_params(tape, params)
    out = model_forward(tape, leaves, mspec, images, tokens, ufeat, variant, t)
    diff = sub(out.pred, tape.const(hr))
    obj = sum_all(mul(mul(diff, diff), tape.const(weights)))
    return tape, obj


def rademacher_complexity(
    params: dict[str, np.ndarray],
    mspec: ModelSpec,
    images: np.ndarray,
    tokens: dict[str, np.ndarray],
    ufeat: np.ndarray,
    hr: np.ndarray,
    variant: str,
    t: float = 0.25,
    trainable: "list[str] | None" = None,
    pairs: int = 4,
    steps: int = 500,
    lr: float = 1e-3,
    seed: int = 0,
) -> RademacherReport:
    """Empirical Rademacher estimate of the per-sample loss class.

    ``trainable`` limits which parameters the ascent may move (defaults to
    all); pass an empty list to measure the constant class, which comes
    out exactly zero.
    """
    n = images.shape[0]
    if n < 1:
        raise InsufficientDataError("need at least one sample")
    if pairs < 1 or steps < 0:
        raise DomainError(f"pairs must be >= 1 and steps >= 0, got {pairs}, {steps}")
    if trainable is None:
        trainable = sorted(params)
    per_elem = 1.0 / (n * images[0].size)

    sup_values: list[tuple[float, float]] = []
    pair_means: list[float] = []
    for p in range(pairs):
        srng = Rng(derive(seed, p + 1))
        signs = np.where(srng.uniform(n) < 0.5, 1.0, -1.0)
        sups = []
        for side in (1.0, -1.0):
            w = (side * signs * per_elem)[:, None, None, None] * np.ones_like(images[0])[None]
            work = {k: v.copy() for k, v in params.items()}
            opt = Adam(
                {k: work[k] for k in trainable}, lr=lr, maximize=True
            ) if trainable else None
            tape, obj = _signed_loss_objective(
                work, mspec, images, tokens, ufeat, hr, w, variant, t
            )
            best = float(obj.val)
            for _ in range(steps if trainable else 0):
                grads = tape.backward(obj)
                opt.step(grads)
                tape, obj = _signed_loss_objective(
                    work, mspec, images, tokens, ufeat, hr, w, variant, t
                )
                best = max(best, float(obj.val))
            sups.append(best)
        sup_values.append((sups[0], sups[1]))
        pair_means.append((sups[0] + sups[1]) / 2.0)

    return RademacherReport(
        estimate=float(np.mean(pair_means)),
        pair_means=tuple(pair_means),
        sup_values=tuple(sup_values),
        pairs=pairs,
        steps=steps,
        n=n,
        n_trainable=len(trainable),
    )
