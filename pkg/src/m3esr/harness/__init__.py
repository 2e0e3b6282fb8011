"""Experiment harness: configuration, training, evaluation, experiment
drivers, and the command line front end."""

from .config import (
    ExperimentConfig,
    config_from_dict,
    load_config,
    save_config,
)
from .evaluate import (
    EVAL_CHUNK,
    EvalResult,
    check_disjoint,
    eval_csv_text,
    eval_summary,
    evaluate,
)
from .experiments import (
    MODULE_GRID,
    exp_ablate_modality,
    exp_ablate_module,
    exp_static_vs_dynamic,
    exp_svd,
    exp_theory,
    gen_data,
    run_eval,
    run_train,
)
from .metrics import PSNR_CAP, mse_rows, psnr, ssim
from .train import (
    TrainResult,
    assert_midpoint_identity,
    history_csv_text,
    load_checkpoint,
    save_checkpoint,
    schedule_coefficients,
    train,
)

__all__ = [
    "EVAL_CHUNK",
    "EvalResult",
    "ExperimentConfig",
    "MODULE_GRID",
    "PSNR_CAP",
    "TrainResult",
    "assert_midpoint_identity",
    "check_disjoint",
    "config_from_dict",
    "eval_csv_text",
    "eval_summary",
    "evaluate",
    "exp_ablate_modality",
    "exp_ablate_module",
    "exp_static_vs_dynamic",
    "exp_svd",
    "exp_theory",
    "gen_data",
    "history_csv_text",
    "load_checkpoint",
    "load_config",
    "mse_rows",
    "psnr",
    "run_eval",
    "run_train",
    "save_checkpoint",
    "save_config",
    "schedule_coefficients",
    "ssim",
    "train",
]
