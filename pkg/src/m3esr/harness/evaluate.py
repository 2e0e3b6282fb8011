"""Holdout evaluation with split hygiene.

Evaluation refuses to score a split that shares any sample seed with the
training split; since every sample is a pure function of its seed, seed
disjointness is exactly sample disjointness.

Scoring is defined for the regression mode only: one deterministic
forward pass per sample, conditioned on the same timestep training used.
Refinement-mode configs must sample instead, so handing one to
:func:`evaluate` raises ModeError rather than silently scoring the wrong
head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContaminationError, ModeError
from ..model import canonical_variant, model_forward
from ..numerics import Tape, bind_params
from .config import ExperimentConfig
from .metrics import mse_rows, psnr, ssim

EVAL_CHUNK = 50


def check_disjoint(train_seeds: np.ndarray, eval_seeds: np.ndarray) -> None:
    overlap = set(map(int, train_seeds)) & set(map(int, eval_seeds))
    if overlap:
        raise ContaminationError(
            f"{len(overlap)} sample seed(s) appear in both splits, "
            f"e.g. {sorted(overlap)[:3]}"
        )


@dataclass(frozen=True)
class EvalResult:
    variant: str
    t: float
    psnr: np.ndarray            # (N,)
    ssim: np.ndarray            # (N,)
    mse: np.ndarray             # (N,)
    baseline_psnr: np.ndarray   # (N,) cheap upscale vs HR
    seeds: np.ndarray           # (N,)

    @property
    def psnr_mean(self) -> float:
        return float(self.psnr.mean())

    @property
    def ssim_mean(self) -> float:
        return float(self.ssim.mean())

    @property
    def baseline_psnr_mean(self) -> float:
        return float(self.baseline_psnr.mean())

    @property
    def mse_mean(self) -> float:
        return float(self.mse.mean())


def predict(
    params: dict[str, np.ndarray],
    config: ExperimentConfig,
    ds,
    variant: "str | None" = None,
    t: "float | None" = None,
) -> np.ndarray:
    """Deterministic regression outputs for a whole split, clamped."""
    variant = canonical_variant(variant or config.variant)
    t = config.t_train if t is None else float(t)
    mspec = config.model_spec
    mods = mspec.modalities
    outputs = np.zeros_like(ds.hr)
    for lo in range(0, ds.n, EVAL_CHUNK):
        hi = min(lo + EVAL_CHUNK, ds.n)
        tape = Tape()
        leaves = bind_params(tape, params)
        out = model_forward(
            tape, leaves, mspec,
            ds.up[lo:hi],
            {m: ds.tokens[m][lo:hi] for m in mods},
            ds.ufeat[lo:hi],
            variant, t,
        )
        outputs[lo:hi] = out.pred.val
    return np.clip(outputs, 0.0, 1.0)


def evaluate(
    params: dict[str, np.ndarray],
    config: ExperimentConfig,
    ds_eval,
    train_seeds: "np.ndarray | None",
    variant: "str | None" = None,
    dump_dir: "str | None" = None,
    dump_count: int = 4,
) -> EvalResult:
    """Score every sample of a split against its HR target.

    ``train_seeds`` enables the contamination check; pass None only when
    scoring a split that never met a training run.  ``dump_dir`` writes
    8-bit previews of the first few inputs, outputs, and targets.
    """
    if config.mode != "regression":
        raise ModeError(
            "evaluate is defined for the regression mode; sample "
            f"refinement-mode models instead (mode={config.mode!r})"
        )
    variant = canonical_variant(variant or config.variant)
    if train_seeds is not None:
        check_disjoint(np.asarray(train_seeds), ds_eval.seeds)

    outputs = predict(params, config, ds_eval, variant)

    if dump_dir is not None:
        import os

        from ..numerics import write_pgm

        os.makedirs(dump_dir, exist_ok=True)
        for i in range(min(dump_count, ds_eval.n)):
            write_pgm(os.path.join(dump_dir, f"{i:03d}_input.pgm"), ds_eval.up[i])
            write_pgm(os.path.join(dump_dir, f"{i:03d}_output.pgm"), outputs[i])
            write_pgm(os.path.join(dump_dir, f"{i:03d}_target.pgm"), ds_eval.hr[i])

    return EvalResult(
        variant=variant,
        t=config.t_train,
        psnr=psnr(outputs, ds_eval.hr),
        ssim=ssim(outputs, ds_eval.hr),
        mse=mse_rows(outputs, ds_eval.hr),
        baseline_psnr=psnr(np.clip(ds_eval.coarse, 0.0, 1.0), ds_eval.hr),
        seeds=ds_eval.seeds.copy(),
    )


def eval_csv_text(result: EvalResult) -> str:
    lines = ["idx,seed,psnr,ssim,mse,baseline_psnr"]
    for i in range(result.psnr.shape[0]):
        lines.append(
            f"{i},{int(result.seeds[i])},{float(result.psnr[i])!r},"
            f"{float(result.ssim[i])!r},{float(result.mse[i])!r},"
            f"{float(result.baseline_psnr[i])!r}"
        )
    return "\n".join(lines) + "\n"


def eval_summary(result: EvalResult) -> dict:
    return {
        "variant": result.variant,
        "t": result.t,
        "n": int(result.psnr.shape[0]),
        "psnr_mean": result.psnr_mean,
        "ssim_mean": result.ssim_mean,
        "mse_mean": result.mse_mean,
        "baseline_psnr_mean": result.baseline_psnr_mean,
        "psnr_gain_over_baseline": result.psnr_mean - result.baseline_psnr_mean,
    }
