"""Experiment drivers: each one trains what it needs, evaluates, and writes
a small bundle of artifacts (CSV + JSON, plus timing.txt) into an output
directory.

Artifact hygiene: CSV and JSON files contain only reproducible numbers, so
byte-identical reruns are possible.  Wall-clock measurements go to
timing.txt and nowhere else.
"""

from __future__ import annotations

import json
import os
import time

import numpy as np

from ..fusion import static_gate_values
from ..model import VARIANTS, active_param_names, canonical_variant
from ..synth import make_dataset, split_seeds
from ..theory import (
    bound_report,
    dataset_anchors,
    first_order_check,
    gamma_moe,
    rademacher_complexity,
    weight_norm_proxy,
    write_gamma_csv,
    write_report_json,
)
from .config import ExperimentConfig, save_config
from .evaluate import eval_csv_text, eval_summary, evaluate
from .train import history_csv_text, save_checkpoint, train

SVD_SAMPLE_LIMIT = 64

# corruption applied by the routing study when the config leaves it empty;
# an explicit rate of 0.0 is honored as written
ROUTING_STUDY_CORRUPTION = {"seg": 0.3}


class _Timing:
    """Accumulates named wall-clock spans; written to timing.txt only."""

    def __init__(self) -> None:
        self.spans: list[tuple[str, float]] = []
        self._label = ""
        self._start = 0.0

    def start(self, label: str) -> None:
        self._label = label
        self._start = time.perf_counter()

    def stop(self) -> None:
        self.spans.append((self._label, time.perf_counter() - self._start))

    def write(self, path: str) -> None:
        lines = [f"{label}: {seconds:.3f} s" for label, seconds in self.spans]
        total = sum(s for _, s in self.spans)
        lines.append(f"total: {total:.3f} s")
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")


def _write_json(path: str, obj: dict) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _write_text(path: str, text: str) -> None:
    with open(path, "w") as f:
        f.write(text)


def _datasets(config: ExperimentConfig):
    train_seed, holdout_seed, proj_seed = split_seeds(config.seed)
    ds_tr = make_dataset(
        train_seed, config.n_train, config.scene, config.dim, proj_seed,
        config.corruption, threads=config.threads,
    )
    ds_ho = make_dataset(
        holdout_seed, config.n_holdout, config.scene, config.dim, proj_seed,
        config.corruption, threads=config.threads,
    )
    return ds_tr, ds_ho, proj_seed, holdout_seed


def _final_mse(result) -> float:
    return float(result.history[-1]["mse"]) if result.history else float("nan")


def gen_data(config: ExperimentConfig, out_dir: str, previews: bool = False) -> dict:
    """Materialize both splits on disk under ``out_dir``."""
    from ..synth import write_dataset_dir

    os.makedirs(out_dir, exist_ok=True)
    timing = _Timing()
    timing.start("generate")
    ds_tr, ds_ho, _, _ = _datasets(config)
    timing.stop()
    timing.start("write")
    write_dataset_dir(ds_tr, os.path.join(out_dir, "train"), pgm=previews)
    write_dataset_dir(ds_ho, os.path.join(out_dir, "holdout"), pgm=previews)
    timing.stop()
    save_config(config, os.path.join(out_dir, "config.json"))
    summary = {
        "n_train": ds_tr.n,
        "n_holdout": ds_ho.n,
        "size": config.size,
        "scale": config.scale,
        "token_dim": config.dim,
        "corruption": dict(config.corruption),
    }
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    timing.write(os.path.join(out_dir, "timing.txt"))
    return summary


def run_train(config: ExperimentConfig, out_dir: str) -> dict:
    """Train the configured variant; write checkpoint + history CSV."""
    os.makedirs(out_dir, exist_ok=True)
    timing = _Timing()
    timing.start("data")
    ds_tr, ds_ho, _, _ = _datasets(config)
    timing.stop()
    timing.start("train")
    result = train(config, ds_tr)
    timing.stop()
    timing.start("eval")
    ev = evaluate(result.params, config, ds_ho, ds_tr.seeds)
    timing.stop()
    save_checkpoint(os.path.join(out_dir, "model.m3c"), result)
    _write_text(os.path.join(out_dir, "history.csv"), history_csv_text(result.history))
    save_config(config, os.path.join(out_dir, "config.json"))
    summary = {
        "variant": result.variant,
        "steps": config.steps,
        "final_train_mse": _final_mse(result),
        "holdout": eval_summary(ev),
    }
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    timing.write(os.path.join(out_dir, "timing.txt"))
    return summary


def run_eval(
    config: ExperimentConfig,
    out_dir: str,
    params: dict[str, np.ndarray],
    variant: str,
    dump_count: int = 0,
) -> dict:
    """Score a trained model on a fresh holdout split."""
    os.makedirs(out_dir, exist_ok=True)
    timing = _Timing()
    timing.start("data")
    ds_tr, ds_ho, _, _ = _datasets(config)
    timing.stop()
    timing.start("eval")
    ev = evaluate(
        params, config, ds_ho, ds_tr.seeds, variant=variant,
        dump_dir=os.path.join(out_dir, "previews") if dump_count > 0 else None,
        dump_count=dump_count,
    )
    timing.stop()
    _write_text(os.path.join(out_dir, "eval.csv"), eval_csv_text(ev))
    summary = eval_summary(ev)
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    timing.write(os.path.join(out_dir, "timing.txt"))
    return summary


def exp_svd(config: ExperimentConfig, out_dir: str) -> dict:
    """Singular-value spectra of modality token matrices and trained weights.

    Token spectra come from holdout samples stacked into one (n*N_p, dim)
    matrix per modality; weight spectra from the rank-2 parameters that the
    configured variant actually trains.
    """
    os.makedirs(out_dir, exist_ok=True)
    timing = _Timing()
    timing.start("data")
    ds_tr, ds_ho, _, _ = _datasets(config)
    timing.stop()
    timing.start("train")
    result = train(config, ds_tr)
    timing.stop()

    timing.start("svd")
    mods = config.model_spec.modalities
    n_use = min(SVD_SAMPLE_LIMIT, ds_ho.n)
    rows: list[str] = ["kind,name,index,value"]
    token_summary: dict[str, dict] = {}
    for m in mods:
        mat = ds_ho.tokens[m][:n_use].reshape(-1, config.dim)
        sv = np.linalg.svd(mat, compute_uv=False)
        for i, s in enumerate(sv):
            rows.append(f"tokens,{m},{i},{float(s)!r}")
        token_summary[m] = {
            "top": float(sv[0]),
            "stable_rank": float((sv ** 2).sum() / (sv[0] ** 2)) if sv[0] > 0 else 0.0,
            "count": int(sv.shape[0]),
        }
    weight_summary: dict[str, dict] = {}
    for name in active_param_names(result.params, result.variant):
        w = result.params[name]
        if w.ndim != 2:
            continue
        sv = np.linalg.svd(w, compute_uv=False)
        for i, s in enumerate(sv):
            rows.append(f"weight,{name},{i},{float(s)!r}")
        weight_summary[name] = {"top": float(sv[0]), "count": int(sv.shape[0])}
    timing.stop()

    _write_text(os.path.join(out_dir, "svd.csv"), "\n".join(rows) + "\n")
    summary = {
        "variant": result.variant,
        "token_samples": n_use,
        "tokens": token_summary,
        "weights": weight_summary,
    }
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    save_config(config, os.path.join(out_dir, "config.json"))
    timing.write(os.path.join(out_dir, "timing.txt"))
    return summary


def _routed_variant(config: ExperimentConfig) -> str:
    """The configured variant if it routes, else plain routed gates."""
    v = canonical_variant(config.variant)
    return v if VARIANTS[v][0] == "routed" else "dynamic"


def _train_routed(config: ExperimentConfig, ds_tr, variant: str, timing, label: str):
    """Static baseline first (for the gate anchor), then the routed model."""
    timing.start(f"{label}-static")
    static = train(config, ds_tr, variant="static")
    timing.stop()
    timing.start(f"{label}-{variant}")
    routed = train(
        config, ds_tr, variant=variant,
        gate_anchor=static_gate_values(static.params),
    )
    timing.stop()
    return routed


def exp_static_vs_dynamic(config: ExperimentConfig, out_dir: str) -> dict:
    """Constant gates vs routed gates under guidance corruption, multi seed.

    Per seed: train both variants on the same corrupted split, score held
    out and training MSE (their difference is the generalization gap), and
    measure the routed model's gate/contribution covariance on the holdout
    split.  An empty corruption mapping defaults to transplanting 30% of
    segmentation rows; explicit zero rates run the study on clean data.
    """
    os.makedirs(out_dir, exist_ok=True)
    timing = _Timing()
    corr = dict(config.corruption) if config.corruption else dict(ROUTING_STUDY_CORRUPTION)
    base = config.with_overrides(corruption=corr)
    mods = base.model_spec.modalities

    per_seed: list[dict] = []
    lines = [
        "seed,variant,train_mse,holdout_mse,gap,psnr,ssim,"
        "gamma_total," + ",".join(f"gamma_{m}" for m in mods)
    ]
    for i in range(base.n_seeds):
        cfg = base.with_overrides(seed=base.seed + i)
        timing.start(f"seed{cfg.seed}-data")
        ds_tr, ds_ho, _, _ = _datasets(cfg)
        timing.stop()

        timing.start(f"seed{cfg.seed}-static")
        static = train(cfg, ds_tr, variant="static")
        timing.stop()
        anchor = static_gate_values(static.params)
        timing.start(f"seed{cfg.seed}-dynamic")
        dynamic = train(cfg, ds_tr, variant="dynamic", gate_anchor=anchor)
        timing.stop()

        timing.start(f"seed{cfg.seed}-anchors")
        anchors = dataset_anchors(
            dynamic.params, cfg.model_spec, ds_ho, anchor, "dynamic",
            cfg.t_train, limit=cfg.anchor_samples,
        )
        gamma = gamma_moe(anchors.gates, anchors.deltas)
        timing.stop()

        entry = {"seed": cfg.seed}
        for name, res in (("static", static), ("dynamic", dynamic)):
            timing.start(f"seed{cfg.seed}-eval-{name}")
            ev_ho = evaluate(res.params, cfg, ds_ho, ds_tr.seeds, variant=name)
            # gap needs the training split scored the same way; passing no
            # training seeds skips the disjointness check on purpose
            ev_tr = evaluate(res.params, cfg, ds_tr, None, variant=name)
            timing.stop()
            row = {
                "train_mse": ev_tr.mse_mean,
                "holdout_mse": ev_ho.mse_mean,
                "gap": ev_ho.mse_mean - ev_tr.mse_mean,
                "psnr": ev_ho.psnr_mean,
                "ssim": ev_ho.ssim_mean,
            }
            if name == "dynamic":
                row["gamma_total"] = gamma.total
                row["gamma_per_modality"] = dict(gamma.per_modality)
            entry[name] = row
            gcols = (
                f"{gamma.total!r}," + ",".join(f"{gamma.per_modality[m]!r}" for m in mods)
                if name == "dynamic"
                else "," * len(mods)
            )
            lines.append(
                f"{cfg.seed},{name},{row['train_mse']!r},{row['holdout_mse']!r},"
                f"{row['gap']!r},{row['psnr']!r},{row['ssim']!r},{gcols}"
            )
        per_seed.append(entry)

    summary: dict = {"corruption": corr, "per_seed": per_seed}
    if base.n_seeds > 1:
        h_static = [e["static"]["holdout_mse"] for e in per_seed]
        h_dynamic = [e["dynamic"]["holdout_mse"] for e in per_seed]
        summary["aggregate"] = {
            "holdout_mse_mean": {
                "static": float(np.mean(h_static)),
                "dynamic": float(np.mean(h_dynamic)),
            },
            "gap_mean": {
                "static": float(np.mean([e["static"]["gap"] for e in per_seed])),
                "dynamic": float(np.mean([e["dynamic"]["gap"] for e in per_seed])),
            },
            "dynamic_wins": sum(d < s for d, s in zip(h_dynamic, h_static)),
            "gamma_positive": sum(e["dynamic"]["gamma_total"] > 0 for e in per_seed),
        }

    _write_text(os.path.join(out_dir, "static_vs_dynamic.csv"), "\n".join(lines) + "\n")
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    save_config(config, os.path.join(out_dir, "config.json"))
    timing.write(os.path.join(out_dir, "timing.txt"))
    return summary


def exp_ablate_modality(config: ExperimentConfig, out_dir: str) -> dict:
    """Leave-one-out guidance ablation, multi seed.

    Grid rows: no guidance at all, the routed model with each modality
    removed in turn, and the routed model with every modality.  Removing a
    modality drops its expert parameters from the checkpoint, so the saved
    first-seed models double as a structural record of each row.
    """
    os.makedirs(out_dir, exist_ok=True)
    timing = _Timing()
    variant = _routed_variant(config)
    mods = config.model_spec.modalities
    grid: list[tuple[str, tuple[str, ...] | None]] = [("none", None)]
    grid += [(f"wo_{m}", tuple(x for x in mods if x != m)) for m in mods]
    grid.append(("all", mods))

    rows: dict[str, dict[str, list[float]]] = {
        label: {"mse": [], "psnr": [], "ssim": []} for label, _ in grid
    }
    lines = ["row,seed,mse,psnr,ssim"]
    for i in range(config.n_seeds):
        cfg = config.with_overrides(seed=config.seed + i)
        timing.start(f"seed{cfg.seed}-data")
        ds_tr, ds_ho, _, _ = _datasets(cfg)
        timing.stop()
        for label, subset in grid:
            if subset is None:
                timing.start(f"seed{cfg.seed}-{label}")
                res = train(cfg, ds_tr, variant="no-modality")
                timing.stop()
                row_cfg, row_variant = cfg, "no-modality"
            else:
                row_cfg = cfg.with_overrides(modalities=subset)
                res = _train_routed(row_cfg, ds_tr, variant, timing, f"seed{cfg.seed}-{label}")
                row_variant = variant
            timing.start(f"seed{cfg.seed}-{label}-eval")
            ev = evaluate(res.params, row_cfg, ds_ho, ds_tr.seeds, variant=row_variant)
            timing.stop()
            rows[label]["mse"].append(ev.mse_mean)
            rows[label]["psnr"].append(ev.psnr_mean)
            rows[label]["ssim"].append(ev.ssim_mean)
            lines.append(
                f"{label},{cfg.seed},{ev.mse_mean!r},{ev.psnr_mean!r},{ev.ssim_mean!r}"
            )
            if i == 0:
                save_checkpoint(os.path.join(out_dir, f"model_{label}.m3c"), res)

    table = {
        label: {
            "mse": vals["mse"],
            "psnr": vals["psnr"],
            "ssim": vals["ssim"],
            "mse_mean": float(np.mean(vals["mse"])),
        }
        for label, vals in rows.items()
    }
    summary: dict = {"variant": variant, "rows": table}
    if config.n_seeds > 1:
        labels = [label for label, _ in grid]
        none_worst = sum(
            all(rows["none"]["mse"][i] >= rows[l]["mse"][i] for l in labels if l != "none")
            for i in range(config.n_seeds)
        )
        summary["aggregate"] = {
            "none_worst_count": none_worst,
            "all_not_worse_than_none_count": sum(
                rows["all"]["mse"][i] <= rows["none"]["mse"][i]
                for i in range(config.n_seeds)
            ),
        }

    _write_text(os.path.join(out_dir, "ablate_modality.csv"), "\n".join(lines) + "\n")
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    save_config(config, os.path.join(out_dir, "config.json"))
    timing.write(os.path.join(out_dir, "timing.txt"))
    return summary


# module-grid rows: which of the two mechanisms is switched on
MODULE_GRID = (
    ("routing", "dynamic"),
    ("temperature", "temp-only"),
    ("both", "dynamic-temp"),
)


def exp_ablate_module(config: ExperimentConfig, out_dir: str) -> dict:
    """Mechanism ablation: routed gates alone, scheduled temperature alone,
    and the two together, each trained per seed on identical data.

    The static baseline is trained once per seed; it anchors the routed
    rows' gate means and is not itself a row.
    """
    os.makedirs(out_dir, exist_ok=True)
    timing = _Timing()
    rows: dict[str, dict[str, list[float]]] = {
        label: {"mse": [], "psnr": [], "ssim": []} for label, _ in MODULE_GRID
    }
    lines = ["row,seed,mse,psnr,ssim"]
    for i in range(config.n_seeds):
        cfg = config.with_overrides(seed=config.seed + i)
        timing.start(f"seed{cfg.seed}-data")
        ds_tr, ds_ho, _, _ = _datasets(cfg)
        timing.stop()
        timing.start(f"seed{cfg.seed}-static")
        static = train(cfg, ds_tr, variant="static")
        timing.stop()
        anchor = static_gate_values(static.params)
        for label, variant in MODULE_GRID:
            gate_mode, _ = VARIANTS[variant]
            timing.start(f"seed{cfg.seed}-{label}")
            res = train(
                cfg, ds_tr, variant=variant,
                gate_anchor=anchor if gate_mode == "routed" else None,
            )
            timing.stop()
            timing.start(f"seed{cfg.seed}-{label}-eval")
            ev = evaluate(res.params, cfg, ds_ho, ds_tr.seeds, variant=variant)
            timing.stop()
            rows[label]["mse"].append(ev.mse_mean)
            rows[label]["psnr"].append(ev.psnr_mean)
            rows[label]["ssim"].append(ev.ssim_mean)
            lines.append(
                f"{label},{cfg.seed},{ev.mse_mean!r},{ev.psnr_mean!r},{ev.ssim_mean!r}"
            )

    table = {
        label: {
            "variant": dict(MODULE_GRID)[label],
            "mse": vals["mse"],
            "psnr": vals["psnr"],
            "ssim": vals["ssim"],
            "mse_mean": float(np.mean(vals["mse"])),
        }
        for label, vals in rows.items()
    }
    summary: dict = {"rows": table}
    if config.n_seeds > 1:
        means = {label: table[label]["mse_mean"] for label, _ in MODULE_GRID}
        summary["aggregate"] = {
            "best_mean": min(means, key=means.get),
            "best_per_seed": [
                min(rows, key=lambda l: rows[l]["mse"][i])
                for i in range(config.n_seeds)
            ],
        }

    _write_text(os.path.join(out_dir, "ablate_module.csv"), "\n".join(lines) + "\n")
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    save_config(config, os.path.join(out_dir, "config.json"))
    timing.write(os.path.join(out_dir, "timing.txt"))
    return summary


def exp_theory(config: ExperimentConfig, out_dir: str) -> dict:
    """Numerical verification bundle for the generalization analysis.

    Trains the static baseline and a routed model, then measures on the
    holdout split: the gate/contribution covariance term, the covariance
    decomposition identity, gate unbiasedness against the baseline anchor,
    the first-order expansion residual slope, an empirical Rademacher
    estimate over the trainable parameters, and the weight-norm proxy.
    Everything lands in report.json; per-patch covariances in gamma.csv.
    """
    os.makedirs(out_dir, exist_ok=True)
    timing = _Timing()
    variant = canonical_variant(config.variant)
    if VARIANTS[variant][0] != "routed":
        variant = "dynamic-temp"

    timing.start("data")
    ds_tr, ds_ho, _, _ = _datasets(config)
    timing.stop()

    timing.start("train-static")
    static = train(config, ds_tr, variant="static")
    timing.stop()
    anchor = static_gate_values(static.params)
    timing.start(f"train-{variant}")
    routed = train(config, ds_tr, variant=variant, gate_anchor=anchor)
    timing.stop()

    mspec = config.model_spec
    mods = mspec.modalities
    t = config.t_train

    timing.start("anchors")
    anchors = dataset_anchors(
        routed.params, mspec, ds_ho, anchor, variant, t,
        limit=config.anchor_samples,
    )
    timing.stop()
    gamma = gamma_moe(anchors.gates, anchors.deltas)

    timing.start("first-order")
    from ..theory import sample_anchors

    probe = sample_anchors(
        routed.params, mspec, ds_ho.coarse[0],
        {m: ds_ho.tokens[m][0] for m in mods},
        ds_ho.ufeat[0], ds_ho.hr[0], anchor, variant, t,
    )
    first = first_order_check(
        routed.params, mspec, probe.h_static,
        probe.h_dynamic - probe.h_static,
        ds_ho.coarse[0], ds_ho.hr[0],
    )
    timing.stop()

    timing.start("rademacher")
    n_rad = min(config.rademacher_samples, ds_ho.n)
    trainable = active_param_names(routed.params, variant)
    rad = rademacher_complexity(
        routed.params, mspec,
        ds_ho.coarse[:n_rad],
        {m: ds_ho.tokens[m][:n_rad] for m in mods},
        ds_ho.ufeat[:n_rad], ds_ho.hr[:n_rad],
        variant, t,
        trainable=trainable,
        pairs=config.rademacher_pairs,
        steps=config.rademacher_steps,
        lr=config.lr,
        seed=config.seed,
    )
    timing.stop()

    wnorm = weight_norm_proxy(routed.params, trainable)

    timing.start("holdout-eval")
    ev = evaluate(routed.params, config, ds_ho, ds_tr.seeds, variant=variant)
    timing.stop()

    report = bound_report(
        variant, mods, anchors, gamma, first, rad, wnorm,
        config.delta, _final_mse(routed), ev.mse_mean,
    )
    write_report_json(report, os.path.join(out_dir, "report.json"))
    write_gamma_csv(gamma, os.path.join(out_dir, "gamma.csv"))
    save_config(config, os.path.join(out_dir, "config.json"))
    timing.write(os.path.join(out_dir, "timing.txt"))
    return report
