"""Full network: variant table, forward pass, decoding, refinement."""

import numpy as np
import pytest

from m3esr.errors import DimensionError, DomainError, ModeError
from m3esr.model import (
    UFEAT_DIM,
    VARIANTS,
    ModelSpec,
    active_param_names,
    canonical_variant,
    init_model,
    model_forward,
    patchify_batch,
    refine,
    training_loss,
)
from m3esr.numerics import Rng, Tape, bind_params
from m3esr.synth import SceneSpec, patchify

TOY = SceneSpec(size=8, scale=2, patch=2)
MSPEC = ModelSpec(scene=TOY, dim=6, attn_dim=5, router_dim=6)
MODS = MSPEC.modalities


def toy_batch(seed=0, batch=2):
    rng = Rng(seed)
    n_p = TOY.n_patches
    images = rng.uniform(batch * TOY.size * TOY.size).reshape(
        batch, TOY.size, TOY.size, 1
    )
    hr = rng.uniform(batch * TOY.size * TOY.size).reshape(batch, TOY.size, TOY.size, 1)
    tokens = {
        m: rng.normal(batch * n_p * MSPEC.dim).reshape(batch, n_p, MSPEC.dim)
        for m in MODS
    }
    ufeat = rng.uniform(batch * n_p * UFEAT_DIM).reshape(batch, n_p, UFEAT_DIM)
    return images, hr, tokens, ufeat


def forward_values(params, images, tokens, ufeat, variant, t=0.5):
    tape = Tape()
    leaves = bind_params(tape, params)
    out = model_forward(tape, leaves, MSPEC, images, tokens, ufeat, variant, t)
    return out.pred.val


# ---------------------------------------------------------------- variants


def test_variant_table_and_aliases():
    assert set(VARIANTS) == {"static", "dynamic", "dynamic-temp", "temp-only", "no-modality"}
    assert canonical_variant("dynamic-no-temp") == "dynamic"
    assert canonical_variant("static") == "static"
    with pytest.raises(ModeError):
        canonical_variant("fancy")


def test_active_param_names_per_variant():
    params = init_model(0, MSPEC)
    by_variant = {v: set(active_param_names(params, v)) for v in VARIANTS}

    for v, names in by_variant.items():
        assert any(n.startswith("embed_") for n in names)
        assert any(n.startswith("dec_") for n in names)

    assert not any(n.startswith(("expert_", "router_", "sched_")) for n in by_variant["no-modality"])
    assert "static_gate_logit" not in by_variant["no-modality"]

    assert "static_gate_logit" in by_variant["static"]
    assert not any(n.startswith("router_") for n in by_variant["static"])
    assert not any(n.startswith("sched_") for n in by_variant["static"])

    assert any(n.startswith("router_") for n in by_variant["dynamic"])
    assert "static_gate_logit" not in by_variant["dynamic"]
    assert not any(n.startswith("sched_") for n in by_variant["dynamic"])

    assert any(n.startswith("sched_") for n in by_variant["dynamic-temp"])
    assert any(n.startswith("router_") for n in by_variant["dynamic-temp"])

    assert any(n.startswith("sched_") for n in by_variant["temp-only"])
    assert "static_gate_logit" in by_variant["temp-only"]
    assert not any(n.startswith("router_") for n in by_variant["temp-only"])


def test_init_model_deterministic_and_complete():
    a = init_model(123, MSPEC)
    b = init_model(123, MSPEC)
    c = init_model(124, MSPEC)
    assert sorted(a) == sorted(b)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert any(not np.array_equal(a[k], c[k]) for k in a)
    # one checkpoint carries every group regardless of variant
    for prefix in ("embed_", "dec_", "expert_", "router_", "sched_"):
        assert any(k.startswith(prefix) for k in a)
    assert "static_gate_logit" in a


# ---------------------------------------------------------------- forward


def test_patchify_batch_matches_single():
    rng = Rng(3)
    images = rng.uniform(3 * 8 * 8 * 2).reshape(3, 8, 8, 2)
    got = patchify_batch(images, 2)
    for i in range(3):
        assert np.array_equal(got[i], patchify(images[i], 2))
    with pytest.raises(DimensionError):
        patchify_batch(images[0], 2)
    with pytest.raises(DimensionError):
        patchify_batch(images, 3)


def test_batched_forward_equals_per_sample():
    params = init_model(7, MSPEC)
    images, _, tokens, ufeat = toy_batch(8, batch=3)
    for variant in VARIANTS:
        full = forward_values(params, images, tokens, ufeat, variant, t=0.3)
        for i in range(3):
            one = forward_values(
                params, images[i : i + 1],
                {m: v[i : i + 1] for m, v in tokens.items()},
                ufeat[i : i + 1], variant, t=0.3,
            )
            assert np.array_equal(full[i], one[0]), variant


def test_forward_shape_contract():
    params = init_model(7, MSPEC)
    images, _, tokens, ufeat = toy_batch(8)
    with pytest.raises(DimensionError):
        forward_values(params, images[0], tokens, ufeat, "static")


def test_no_modality_ignores_tokens():
    params = init_model(9, MSPEC)
    images, _, tokens, ufeat = toy_batch(10)
    a = forward_values(params, images, tokens, ufeat, "no-modality")
    other = {m: v + 123.0 for m, v in tokens.items()}
    b = forward_values(params, images, other, ufeat, "no-modality")
    assert np.array_equal(a, b)


def test_variants_diverge_after_perturbation():
    # knock the router head and schedules off their neutral start so every
    # variant computes something different
    params = init_model(11, MSPEC)
    rng = Rng(99)
    params["router_wout"] = rng.normal(params["router_wout"].size).reshape(
        params["router_wout"].shape
    )
    params["static_gate_logit"] = np.array([0.4, -0.2, 0.1, -0.5])
    for m in MODS:
        params[f"sched_{m}_b"] = rng.normal(2)
    images, _, tokens, ufeat = toy_batch(12)
    preds = {
        v: forward_values(params, images, tokens, ufeat, v, t=0.25) for v in VARIANTS
    }
    names = sorted(VARIANTS)
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            assert np.abs(preds[a] - preds[b]).max() > 1e-9, (a, b)


def test_full_model_gradcheck_all_variants():
    from m3esr.numerics import finite_diff

    images, hr, tokens, ufeat = toy_batch(20, batch=1)
    for variant in VARIANTS:
        params = init_model(21, MSPEC)

        def loss_at(values):
            tape = Tape()
            leaves = bind_params(tape, values)
            out = model_forward(tape, leaves, MSPEC, images, tokens, ufeat, variant, 0.25)
            loss, _ = training_loss(
                tape, out, hr, gate_target=np.full(len(MODS), 0.5),
                penalty_weight=0.1, modalities=MODS,
            )
            return loss

        tape_grads = None
        tape = Tape()
        leaves = bind_params(tape, params)
        out = model_forward(tape, leaves, MSPEC, images, tokens, ufeat, variant, 0.25)
        loss, _ = training_loss(
            tape, out, hr, gate_target=np.full(len(MODS), 0.5),
            penalty_weight=0.1, modalities=MODS,
        )
        tape_grads = tape.backward(loss)

        # directional finite difference over every active group at once
        direction = {
            k: Rng(5 + i).normal(params[k].size).reshape(params[k].shape)
            for i, k in enumerate(active_param_names(params, variant))
        }
        h = 1e-6
        plus = {k: v + h * direction[k] if k in direction else v for k, v in params.items()}
        minus = {k: v - h * direction[k] if k in direction else v for k, v in params.items()}
        fd = (float(loss_at(plus).val) - float(loss_at(minus).val)) / (2 * h)
        analytic = sum(float((tape_grads[k] * direction[k]).sum()) for k in direction)
        denom = max(abs(fd), abs(analytic), 1e-8)
        assert abs(fd - analytic) / denom < 1e-5, variant


def test_inactive_groups_get_zero_gradient():
    params = init_model(23, MSPEC)
    images, hr, tokens, ufeat = toy_batch(24, batch=1)
    tape = Tape()
    leaves = bind_params(tape, params)
    out = model_forward(tape, leaves, MSPEC, images, tokens, ufeat, "static", 0.25)
    loss, _ = training_loss(tape, out, hr, modalities=MODS)
    grads = tape.backward(loss)
    active = set(active_param_names(params, "static"))
    for k, g in grads.items():
        if k not in active:
            assert np.all(g == 0.0), k


def test_training_loss_parts():
    params = init_model(25, MSPEC)
    images, hr, tokens, ufeat = toy_batch(26, batch=2)
    tape = Tape()
    leaves = bind_params(tape, params)
    out = model_forward(tape, leaves, MSPEC, images, tokens, ufeat, "dynamic", 0.25)
    target = np.array([0.3, 0.3, 0.3, 0.3])
    loss, parts = training_loss(
        tape, out, hr, gate_target=target, penalty_weight=2.0, modalities=MODS
    )
    assert parts["penalty"] > 0.0  # gates sit at 1/2, target at 0.3
    assert abs(parts["loss"] - (parts["mse"] + parts["penalty"])) < 1e-15
    assert abs(float(loss.val) - parts["loss"]) < 1e-15
    # static fusion has no router to constrain
    tape2 = Tape()
    leaves2 = bind_params(tape2, params)
    out2 = model_forward(tape2, leaves2, MSPEC, images, tokens, ufeat, "static", 0.25)
    _, parts2 = training_loss(
        tape2, out2, hr, gate_target=target, penalty_weight=2.0, modalities=MODS
    )
    assert parts2["penalty"] == 0.0


# ---------------------------------------------------------------- refine


def test_refine_single_step_is_plain_forward():
    params = init_model(31, MSPEC)
    images, _, tokens, ufeat = toy_batch(32)
    direct = forward_values(params, images, tokens, ufeat, "dynamic-temp", t=0.5)
    refined, trace = refine(params, MSPEC, images, tokens, ufeat, "dynamic-temp", steps=1)
    assert np.array_equal(refined, direct)
    assert len(trace.steps) == 1
    assert trace.steps[0].t == 0.5
    assert trace.steps[0].blend == 1.0


def test_refine_trace_contents():
    params = init_model(33, MSPEC)
    images, hr, tokens, ufeat = toy_batch(34)
    out, trace = refine(
        params, MSPEC, images, tokens, ufeat, "dynamic-temp", steps=3, target=hr
    )
    assert [s.k for s in trace.steps] == [3, 2, 1]
    assert [s.t for s in trace.steps] == [0.75, 0.5, 0.25]
    assert trace.steps[-1].blend == 1.0
    for s in trace.steps:
        assert set(s.taus) == set(MODS)
        assert s.mse_to_target is not None and s.mse_to_target >= 0
        assert s.update_mean_abs >= 0
    # unscheduled variants log no temperatures
    _, t2 = refine(params, MSPEC, images, tokens, ufeat, "dynamic", steps=2)
    assert all(s.taus == {} for s in t2.steps)


def test_refine_rejects_bad_steps():
    params = init_model(35, MSPEC)
    images, _, tokens, ufeat = toy_batch(36)
    with pytest.raises(DomainError):
        refine(params, MSPEC, images, tokens, ufeat, "static", steps=0)


def test_refine_deterministic():
    params = init_model(37, MSPEC)
    images, _, tokens, ufeat = toy_batch(38)
    a, _ = refine(params, MSPEC, images, tokens, ufeat, "dynamic-temp", steps=4)
    b, _ = refine(params, MSPEC, images, tokens, ufeat, "dynamic-temp", steps=4)
    assert np.array_equal(a, b)
