"""Gate-contribution covariance: the routing-gain term.

The quantity of interest is

    Gamma = sum_m sum_i Cov(w[i, m], delta[i, m])

with the covariance taken across samples, per patch position and modality.
Under the mean-anchoring constraint E[w[i, m]] = wbar_m the first-order
loss advantage of routing over static gating is exactly Gamma: positive
covariance means the router turns guidance up where it helps and down
where it hurts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, InsufficientDataError


def population_cov(a: np.ndarray, b: np.ndarray) -> float:
    """Population (1/N) covariance, two-pass for numerical honesty.

    A constant factor yields exactly 0.0, matching the algebra instead of
    leaving mean-subtraction residue.
    """
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"need equal-length vectors, got {a.shape}, {b.shape}")
    if a.shape[0] < 2:
        raise InsufficientDataError("covariance needs at least two samples")
    if np.all(a == a[0]) or np.all(b == b[0]):
        return 0.0
    return float(((a - a.mean()) * (b - b.mean())).mean())


@dataclass(frozen=True)
class GammaReport:
    total: float
    per_modality: dict[str, float]
    per_patch: dict[str, np.ndarray]     # m -> (N_p,) covariance per patch
    mean_gates: dict[str, np.ndarray]    # m -> (N_p,)
    mean_deltas: dict[str, np.ndarray]   # m -> (N_p,)
    n: int


def gamma_moe(
    gates: dict[str, np.ndarray], deltas: dict[str, np.ndarray]
) -> GammaReport:
    """Covariance decomposition from stacked (N, N_p) gates and deltas."""
    if set(gates) != set(deltas):
        raise DimensionError(
            f"gate/delta modalities differ: {sorted(gates)} vs {sorted(deltas)}"
        )
    per_patch: dict[str, np.ndarray] = {}
    per_modality: dict[str, float] = {}
    mean_gates: dict[str, np.ndarray] = {}
    mean_deltas: dict[str, np.ndarray] = {}
    n = None
    for m in sorted(gates):
        w = gates[m]
        d = deltas[m]
        if w.shape != d.shape or w.ndim != 2:
            raise DimensionError(
                f"modality {m}: expected matching (N, N_p) arrays, "
                f"got {w.shape} and {d.shape}"
            )
        if n is None:
            n = w.shape[0]
        if w.shape[0] != n:
            raise DimensionError("modalities disagree on sample count")
        if n < 2:
            raise InsufficientDataError(
                f"covariance needs at least two samples, got {n}"
            )
        wc = w - w.mean(axis=0, keepdims=True)
        dc = d - d.mean(axis=0, keepdims=True)
        # a constant factor has zero covariance by definition; zeroing its
        # centered column removes the summation residue that would
        # otherwise leak in at the last ulp
        wc[:, np.all(w == w[:1], axis=0)] = 0.0
        dc[:, np.all(d == d[:1], axis=0)] = 0.0
        per_patch[m] = (wc * dc).mean(axis=0)
        per_modality[m] = float(per_patch[m].sum())
        mean_gates[m] = w.mean(axis=0)
        mean_deltas[m] = d.mean(axis=0)
    return GammaReport(
        total=float(sum(per_modality.values())),
        per_modality=per_modality,
        per_patch=per_patch,
        mean_gates=mean_gates,
        mean_deltas=mean_deltas,
        n=int(n),
    )


def covariance_identity_check(
    w: np.ndarray, delta: np.ndarray, wbar: float
) -> dict[str, float]:
    """Numerical check of E[(w - wbar) d] = (E[w] - wbar) E[d] + Cov(w, d).

    The identity is exact in exact arithmetic for any constant wbar; the
    returned absolute error is pure floating-point residue.
    """
    lhs = float(((w - wbar) * delta).mean())
    cov = population_cov(w, delta)
    rhs = float((w.mean() - wbar) * delta.mean() + cov)
    return {
        "lhs": lhs,
        "rhs": rhs,
        "cov": cov,
        "bias_term": float((w.mean() - wbar) * delta.mean()),
        "abs_err": abs(lhs - rhs),
    }


def unbiasedness_report(
    gates: dict[str, np.ndarray],
    gate_anchor: np.ndarray,
    modalities: tuple[str, ...],
) -> dict[str, dict[str, float]]:
    """Per-modality deviation of the mean gate from its anchor constant."""
    if gate_anchor.shape != (len(modalities),):
        raise DimensionError(
            f"anchor shape {gate_anchor.shape} does not match "
            f"{len(modalities)} modalities"
        )
    out: dict[str, dict[str, float]] = {}
    for j, m in enumerate(modalities):
        mean = float(gates[m].mean())
        out[m] = {
            "mean_gate": mean,
            "anchor": float(gate_anchor[j]),
            "abs_dev": abs(mean - float(gate_anchor[j])),
        }
    return out
