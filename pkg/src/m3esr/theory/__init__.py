"""Numerical verification of the routing-gain analysis and its bound."""

from .anchors import AnchorSet, SampleAnchors, dataset_anchors, phi_at, sample_anchors
from .complexity import (
    RademacherReport,
    confidence_term,
    rademacher_complexity,
    spectral_norm,
    weight_norm_proxy,
)
from .expansion import EPS_GRID, FirstOrderResult, first_order_check
from .gamma import (
    GammaReport,
    covariance_identity_check,
    gamma_moe,
    population_cov,
    unbiasedness_report,
)
from .report import bound_report, gamma_csv_text, write_gamma_csv, write_report_json

__all__ = [
    "AnchorSet",
    "EPS_GRID",
    "FirstOrderResult",
    "GammaReport",
    "RademacherReport",
    "SampleAnchors",
    "bound_report",
    "confidence_term",
    "covariance_identity_check",
    "dataset_anchors",
    "first_order_check",
    "gamma_csv_text",
    "gamma_moe",
    "phi_at",
    "population_cov",
    "rademacher_complexity",
    "sample_anchors",
    "spectral_norm",
    "unbiasedness_report",
    "weight_norm_proxy",
    "write_gamma_csv",
    "write_report_json",
]
