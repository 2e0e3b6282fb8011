"""Covariance diagnostics, expansion residuals, and capacity estimates."""

import json

import numpy as np
import pytest

from m3esr.errors import DimensionError, DomainError, InsufficientDataError
from m3esr.model import ModelSpec, active_param_names, init_model
from m3esr.numerics import Rng
from m3esr.synth import SceneSpec, make_dataset, split_seeds
from m3esr.theory import (
    EPS_GRID,
    bound_report,
    confidence_term,
    covariance_identity_check,
    dataset_anchors,
    first_order_check,
    gamma_csv_text,
    gamma_moe,
    population_cov,
    rademacher_complexity,
    sample_anchors,
    spectral_norm,
    unbiasedness_report,
    weight_norm_proxy,
)

TOY = SceneSpec(size=16, scale=2, patch=4)
MSPEC = ModelSpec(scene=TOY, dim=8, attn_dim=6, router_dim=8)


def toy_dataset(seed=0, n=6):
    tr, ho, pj = split_seeds(seed)
    return make_dataset(ho, n, TOY, MSPEC.dim, pj)


# ---------------------------------------------------------- covariance


def test_population_cov_oracle():
    a = np.array([1.0, 2.0, 4.0, 8.0])
    b = np.array([0.5, -1.0, 2.0, 3.0])
    want = float(np.cov(a, b, bias=True)[0, 1])
    assert abs(population_cov(a, b) - want) < 1e-15


def test_population_cov_rejections():
    with pytest.raises(InsufficientDataError):
        population_cov(np.array([1.0]), np.array([2.0]))
    with pytest.raises(DimensionError):
        population_cov(np.zeros((2, 2)), np.zeros((2, 2)))
    with pytest.raises(DimensionError):
        population_cov(np.zeros(3), np.zeros(4))


def test_gamma_hand_computed():
    # two samples, two patches, one modality: every covariance by hand
    w = np.array([[0.2, 0.8], [0.6, 0.4]])
    d = np.array([[1.0, -1.0], [3.0, 5.0]])
    # patch 0: cov = mean((w-.4)*(d-2)) = ((-.2)(-1)+(.2)(1))/2 = 0.2
    # patch 1: cov = mean((w-.6)*(d-2)) = ((.2)(-3)+(-.2)(3))/2 = -0.6
    report = gamma_moe({"m": w}, {"m": d})
    assert abs(report.per_patch["m"][0] - 0.2) < 1e-15
    assert abs(report.per_patch["m"][1] + 0.6) < 1e-15
    assert abs(report.per_modality["m"] + 0.4) < 1e-15
    assert abs(report.total + 0.4) < 1e-15
    assert report.n == 2
    assert np.allclose(report.mean_gates["m"], [0.4, 0.6])
    assert np.allclose(report.mean_deltas["m"], [2.0, 2.0])


def test_gamma_sums_across_modalities():
    rng = Rng(5)
    w1 = rng.uniform(20).reshape(10, 2)
    d1 = rng.normal(20).reshape(10, 2)
    w2 = rng.uniform(20).reshape(10, 2)
    d2 = rng.normal(20).reshape(10, 2)
    both = gamma_moe({"a": w1, "b": w2}, {"a": d1, "b": d2})
    only_a = gamma_moe({"a": w1}, {"a": d1})
    only_b = gamma_moe({"b": w2}, {"b": d2})
    assert abs(both.total - (only_a.total + only_b.total)) < 1e-14


def test_gamma_constant_gates_exactly_zero():
    # all samples share a gate row: centered factor is identically zero
    w = np.full((50, 3), 0.37)
    d = Rng(9).normal(150).reshape(50, 3)
    report = gamma_moe({"m": w}, {"m": d})
    assert report.total == 0.0
    assert np.all(report.per_patch["m"] == 0.0)


def test_gamma_shape_rejections():
    with pytest.raises(DimensionError):
        gamma_moe({"a": np.zeros((3, 2))}, {"b": np.zeros((3, 2))})
    with pytest.raises(DimensionError):
        gamma_moe({"a": np.zeros((3, 2))}, {"a": np.zeros((3, 3))})
    with pytest.raises(InsufficientDataError):
        gamma_moe({"a": np.zeros((1, 2))}, {"a": np.zeros((1, 2))})


def test_covariance_identity_random_batches():
    rng = Rng(11)
    worst = 0.0
    for _ in range(300):
        n = 2 + int(rng.randint(64))
        w = rng.uniform(n)
        d = rng.normal(n) * 3.0
        wbar = float(rng.uniform(1)[0])
        chk = covariance_identity_check(w, d, wbar)
        worst = max(worst, chk["abs_err"])
        assert abs(chk["lhs"] - (chk["bias_term"] + chk["cov"])) < 1e-12
    assert worst < 1e-12


def test_unbiasedness_report_values():
    gates = {"a": np.array([[0.5, 0.7], [0.3, 0.5]]), "b": np.full((2, 2), 0.25)}
    rep = unbiasedness_report(gates, np.array([0.5, 0.5]), ("a", "b"))
    assert rep["a"]["mean_gate"] == 0.5
    assert rep["a"]["abs_dev"] == 0.0
    assert rep["b"]["abs_dev"] == 0.25
    with pytest.raises(DimensionError):
        unbiasedness_report(gates, np.array([0.5]), ("a", "b"))


# ---------------------------------------------------------- anchors


def test_sample_anchors_shapes_and_static_phi():
    ds = toy_dataset(1, n=3)
    params = init_model(2, MSPEC)
    anchor = np.full(len(MSPEC.modalities), 0.5)
    a = sample_anchors(
        params, MSPEC, ds.coarse[0],
        {m: ds.tokens[m][0] for m in MSPEC.modalities},
        ds.ufeat[0], ds.hr[0], anchor, "dynamic", 0.25,
    )
    n_p = TOY.n_patches
    for m in MSPEC.modalities:
        assert a.gates[m].shape == (n_p,)
        assert a.deltas[m].shape == (n_p,)
    assert a.h_static.shape == (n_p, MSPEC.dim)
    assert a.phi_static >= 0.0 and a.phi_dynamic >= 0.0
    # at init the router emits exactly the 1/2 anchor: h_static == h_dynamic
    assert np.array_equal(a.h_static, a.h_dynamic)
    assert a.phi_static == a.phi_dynamic


def test_dataset_anchors_consistency_with_gamma():
    ds = toy_dataset(3, n=5)
    params = init_model(4, MSPEC)
    # push the router off its neutral start so gates vary across samples
    params["router_wout"] = Rng(5).normal(params["router_wout"].size).reshape(
        params["router_wout"].shape
    )
    anchor = np.full(len(MSPEC.modalities), 0.5)
    aset = dataset_anchors(params, MSPEC, ds, anchor, "dynamic", 0.25)
    assert aset.gates["seg"].shape == (5, TOY.n_patches)
    report = gamma_moe(aset.gates, aset.deltas)
    assert np.isfinite(report.total)
    # limit keeps only the first rows, bit-identically
    small = dataset_anchors(params, MSPEC, ds, anchor, "dynamic", 0.25, limit=2)
    for m in MSPEC.modalities:
        assert np.array_equal(small.gates[m], aset.gates[m][:2])
        assert np.array_equal(small.deltas[m], aset.deltas[m][:2])


def test_anchors_require_routed_variant():
    ds = toy_dataset(6, n=2)
    params = init_model(7, MSPEC)
    anchor = np.full(len(MSPEC.modalities), 0.5)
    with pytest.raises(DimensionError):
        sample_anchors(
            params, MSPEC, ds.coarse[0],
            {m: ds.tokens[m][0] for m in MSPEC.modalities},
            ds.ufeat[0], ds.hr[0], anchor, "static", 0.25,
        )


# ---------------------------------------------------------- expansion


def test_first_order_slope_near_two():
    # smooth network: the remainder after subtracting the linear term is
    # quadratic, so the log-log fit hugs slope 2
    ds = toy_dataset(8, n=2)
    params = init_model(9, MSPEC)
    anchor = np.full(len(MSPEC.modalities), 0.5)
    probe = sample_anchors(
        params, MSPEC, ds.coarse[0],
        {m: ds.tokens[m][0] for m in MSPEC.modalities},
        ds.ufeat[0], ds.hr[0], anchor, "dynamic", 0.25,
    )
    direction = Rng(10).normal(probe.h_static.size).reshape(probe.h_static.shape)
    res = first_order_check(params, MSPEC, probe.h_static, direction, ds.coarse[0], ds.hr[0])
    assert not res.degenerate
    assert res.eps == EPS_GRID
    assert 1.7 < res.slope < 2.3
    assert res.phi0 >= 0.0


def test_first_order_zero_direction_degenerate():
    ds = toy_dataset(11, n=2)
    params = init_model(12, MSPEC)
    h = np.zeros((TOY.n_patches, MSPEC.dim))
    res = first_order_check(params, MSPEC, h, np.zeros_like(h), ds.coarse[0], ds.hr[0])
    assert res.degenerate
    assert np.isnan(res.slope)


def test_first_order_shape_mismatch():
    ds = toy_dataset(13, n=2)
    params = init_model(14, MSPEC)
    h = np.zeros((TOY.n_patches, MSPEC.dim))
    with pytest.raises(DimensionError):
        first_order_check(params, MSPEC, h, np.zeros((2, 2)), ds.coarse[0], ds.hr[0])


# ---------------------------------------------------------- capacity


def test_spectral_norm_oracle():
    rng = Rng(15)
    w = rng.normal(35).reshape(7, 5)
    assert abs(spectral_norm(w) - np.linalg.norm(w, 2)) < 1e-12
    with pytest.raises(DimensionError):
        spectral_norm(np.zeros(3))


def test_weight_norm_proxy_product():
    params = {
        "a": np.diag([2.0, 1.0]),
        "b": np.diag([3.0, 0.5]),
        "bias": np.ones(4),
    }
    assert abs(weight_norm_proxy(params) - 6.0) < 1e-12
    assert abs(weight_norm_proxy(params, ["a"]) - 2.0) < 1e-12
    # rank-1 names are skipped rather than rejected
    assert abs(weight_norm_proxy(params, ["a", "bias"]) - 2.0) < 1e-12


def test_confidence_term_formula_and_domain():
    assert abs(confidence_term(0.05, 100) - np.sqrt(np.log(20.0) / 200.0)) < 1e-15
    with pytest.raises(DomainError):
        confidence_term(0.0, 10)
    with pytest.raises(DomainError):
        confidence_term(1.0, 10)
    with pytest.raises(InsufficientDataError):
        confidence_term(0.1, 0)


def test_rademacher_constant_class_exactly_zero():
    ds = toy_dataset(16, n=4)
    params = init_model(17, MSPEC)
    rep = rademacher_complexity(
        params, MSPEC, ds.coarse, ds.tokens, ds.ufeat, ds.hr,
        "static", trainable=[], pairs=2, steps=3,
    )
    assert rep.estimate == 0.0
    assert all(pm == 0.0 for pm in rep.pair_means)
    assert rep.n_trainable == 0


def test_rademacher_pair_means_nonnegative_and_deterministic():
    ds = toy_dataset(18, n=4)
    params = init_model(19, MSPEC)
    kwargs = dict(
        trainable=active_param_names(params, "static"),
        pairs=2, steps=5, seed=3,
    )
    a = rademacher_complexity(
        params, MSPEC, ds.coarse, ds.tokens, ds.ufeat, ds.hr, "static", **kwargs
    )
    b = rademacher_complexity(
        params, MSPEC, ds.coarse, ds.tokens, ds.ufeat, ds.hr, "static", **kwargs
    )
    assert all(pm >= 0.0 for pm in a.pair_means)
    assert a.estimate > 0.0
    assert a.estimate == b.estimate
    assert a.sup_values == b.sup_values
    # ascent never loses to the starting point
    for (sp, sm), pm in zip(a.sup_values, a.pair_means):
        assert pm == (sp + sm) / 2.0


def test_rademacher_rejections():
    ds = toy_dataset(20, n=2)
    params = init_model(21, MSPEC)
    with pytest.raises(DomainError):
        rademacher_complexity(
            params, MSPEC, ds.coarse, ds.tokens, ds.ufeat, ds.hr, "static", pairs=0
        )


# ---------------------------------------------------------- report


def build_small_report(seed=22):
    ds = toy_dataset(seed, n=4)
    params = init_model(seed + 1, MSPEC)
    params["router_wout"] = Rng(seed + 2).normal(params["router_wout"].size).reshape(
        params["router_wout"].shape
    )
    anchor = np.full(len(MSPEC.modalities), 0.5)
    aset = dataset_anchors(params, MSPEC, ds, anchor, "dynamic", 0.25)
    gamma = gamma_moe(aset.gates, aset.deltas)
    probe = sample_anchors(
        params, MSPEC, ds.coarse[0],
        {m: ds.tokens[m][0] for m in MSPEC.modalities},
        ds.ufeat[0], ds.hr[0], anchor, "dynamic", 0.25,
    )
    first = first_order_check(
        params, MSPEC, probe.h_static, probe.h_dynamic - probe.h_static,
        ds.coarse[0], ds.hr[0],
    )
    rad = rademacher_complexity(
        params, MSPEC, ds.coarse, ds.tokens, ds.ufeat, ds.hr, "dynamic",
        trainable=active_param_names(params, "dynamic"), pairs=1, steps=2,
    )
    report = bound_report(
        "dynamic", MSPEC.modalities, aset, gamma, first, rad,
        weight_norm_proxy(params), 0.05, 0.01, 0.012,
    )
    return report, gamma


def test_bound_report_structure():
    report, _ = build_small_report()
    for key in (
        "variant", "t_eval", "gamma", "first_order", "covariance_identity",
        "unbiasedness", "gain", "rademacher", "weight_norm_proxy",
        "confidence", "bound", "gap",
    ):
        assert key in report, key
    assert report["gap"] == report["holdout_loss"] - report["train_loss"]
    assert report["bound"] == 2.0 * report["rademacher"]["estimate"] + report["confidence"]["term"]
    assert report["covariance_identity"]["max_abs_err"] < 1e-12
    text = json.dumps(report)
    assert "np.float64" not in text
    assert "NaN" not in text or report["first_order"]["degenerate"]


def test_gamma_csv_deterministic_and_parseable():
    report, gamma = build_small_report()
    text1 = gamma_csv_text(gamma)
    text2 = gamma_csv_text(gamma)
    assert text1 == text2
    lines = text1.strip().split("\n")
    assert lines[0] == "modality,patch,cov,mean_gate,mean_delta"
    assert len(lines) == 1 + len(MSPEC.modalities) * TOY.n_patches
    assert "np.float64" not in text1
    # round-trip every float through repr
    for line in lines[1:]:
        parts = line.split(",")
        total_back = float(parts[2])
        assert np.isfinite(total_back)
