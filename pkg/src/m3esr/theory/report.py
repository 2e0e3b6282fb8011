"""Assembly and serialization of the verification report.

One dict with a fixed key set gathers every measured quantity: the
covariance decomposition, the expansion check, the mean-gate deviations,
the capacity estimates, and the resulting bound.  JSON output is sorted
and newline-terminated so identical runs produce identical bytes; the
per-patch covariance table flattens to CSV for spreadsheet work.
"""

from __future__ import annotations

import json

import numpy as np

from .anchors import AnchorSet
from .complexity import RademacherReport, confidence_term
from .expansion import FirstOrderResult
from .gamma import GammaReport, covariance_identity_check, unbiasedness_report


def _f(x) -> float:
    return float(x)


def bound_report(
    variant: str,
    modalities: tuple[str, ...],
    anchors: AnchorSet,
    gamma: GammaReport,
    first_order: FirstOrderResult,
    rademacher: RademacherReport,
    weight_norm: float,
    delta: float,
    train_loss: float,
    holdout_loss: float,
) -> dict:
    """Gather every verification quantity into one JSON-ready dict."""
    identity = {}
    max_err = 0.0
    for j, m in enumerate(modalities):
        # flatten (N, N_p) to one population per modality for the identity
        chk = covariance_identity_check(
            anchors.gates[m].ravel(),
            anchors.deltas[m].ravel(),
            float(anchors.gate_anchor[j]),
        )
        identity[m] = {k: _f(v) for k, v in chk.items()}
        max_err = max(max_err, chk["abs_err"])

    bias_total = 0.0
    for j, m in enumerate(modalities):
        bias_total += float(
            ((gamma.mean_gates[m] - anchors.gate_anchor[j]) * gamma.mean_deltas[m]).sum()
        )

    conf = confidence_term(delta, rademacher.n)
    report = {
        "variant": variant,
        "t_eval": _f(anchors.t),
        "n_anchor_samples": int(gamma.n),
        "train_loss": _f(train_loss),
        "holdout_loss": _f(holdout_loss),
        "gap": _f(holdout_loss - train_loss),
        "gamma": {
            "total": _f(gamma.total),
            "per_modality": {m: _f(v) for m, v in gamma.per_modality.items()},
            "n": int(gamma.n),
        },
        "first_order": {
            "slope": _f(first_order.slope),
            "intercept": _f(first_order.intercept),
            "degenerate": bool(first_order.degenerate),
            "eps": [_f(e) for e in first_order.eps],
            "residuals": [_f(r) for r in first_order.residuals],
            "phi0": _f(first_order.phi0),
            "directional": _f(first_order.directional),
        },
        "covariance_identity": {
            "max_abs_err": _f(max_err),
            "per_modality": identity,
        },
        "unbiasedness": unbiasedness_report(
            anchors.gates, anchors.gate_anchor, modalities
        ),
        "gain": {
            "observed": _f(anchors.phi_static.mean() - anchors.phi_dynamic.mean()),
            "first_order_prediction": _f(gamma.total + bias_total),
            "gamma_part": _f(gamma.total),
            "bias_part": _f(bias_total),
        },
        "rademacher": {
            "estimate": _f(rademacher.estimate),
            "pair_means": [_f(v) for v in rademacher.pair_means],
            "min_pair_mean": _f(min(rademacher.pair_means)),
            "pairs": int(rademacher.pairs),
            "steps": int(rademacher.steps),
            "n": int(rademacher.n),
            "n_trainable": int(rademacher.n_trainable),
        },
        "weight_norm_proxy": _f(weight_norm),
        "confidence": {"delta": _f(delta), "n": int(rademacher.n), "term": _f(conf)},
        "bound": _f(2.0 * rademacher.estimate + conf),
    }
    return report


def write_report_json(report: dict, path: str) -> None:
    with open(path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")


def gamma_csv_text(gamma: GammaReport) -> str:
    """Per-patch covariance table, one row per (modality, patch)."""
    lines = ["modality,patch,cov,mean_gate,mean_delta"]
    for m in sorted(gamma.per_patch):
        cov = gamma.per_patch[m]
        mw = gamma.mean_gates[m]
        md = gamma.mean_deltas[m]
        for i in range(cov.shape[0]):
            lines.append(
                f"{m},{i},{float(cov[i])!r},{float(mw[i])!r},{float(md[i])!r}"
            )
    return "\n".join(lines) + "\n"


def write_gamma_csv(gamma: GammaReport, path: str) -> None:
    with open(path, "w") as f:
        f.write(gamma_csv_text(gamma))
