"""Command line entry point.

Exit codes: 0 on success, 2 for configuration problems, 3 for contract
violations (bad shapes, corrupt files, contaminated splits).  The
M3ESR_THREADS environment variable overrides any --threads value.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from ..errors import ConfigError, ContractError
from ..parallel import resolve_threads
from .config import ExperimentConfig, load_config

COMMANDS = (
    "gen-data",
    "train",
    "eval",
    "exp-svd",
    "exp-ablate-modality",
    "exp-ablate-module",
    "exp-theory",
    "inspect",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="m3esr",
        description="Synthetic multi-modal super-resolution laboratory",
    )
    parser.add_argument("--config", help="JSON config file (defaults apply otherwise)")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--threads", type=int, help="worker threads for data generation")
    parser.add_argument(
        "--dump-steps", type=int, default=0, metavar="N",
        help="write 8-bit previews for the first N evaluated samples",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", help="materialize both dataset splits on disk")
    sub.add_parser("train", help="train the configured variant, save a checkpoint")
    p_eval = sub.add_parser("eval", help="score a checkpoint on the holdout split")
    p_eval.add_argument("checkpoint", help="path to a model.m3c file")
    sub.add_parser("exp-svd", help="singular-value spectra of tokens and weights")
    sub.add_parser("exp-ablate-modality", help="guidance corruption sweep")
    sub.add_parser("exp-ablate-module", help="train and score every variant")
    sub.add_parser("exp-theory", help="generalization diagnostics bundle")
    p_ins = sub.add_parser("inspect", help="describe a tensor, checkpoint, or dataset")
    p_ins.add_argument("path", help="an .m3t/.m3c file or a dataset directory")
    return parser


def _build_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    overrides: dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    threads = resolve_threads(args.threads)
    if threads != config.threads:
        overrides["threads"] = threads
    return config.with_overrides(**overrides) if overrides else config


def _inspect(path: str) -> dict:
    from ..numerics import read_checkpoint, read_tensor

    if os.path.isdir(path):
        meta_path = os.path.join(path, "meta.json")
        if not os.path.isfile(meta_path):
            raise ConfigError(f"not a dataset directory (no meta.json): {path}")
        with open(meta_path) as f:
            meta = json.load(f)
        samples = os.path.join(path, "samples")
        count = len(os.listdir(samples)) if os.path.isdir(samples) else 0
        return {"kind": "dataset", "meta": meta, "samples_on_disk": count}
    if not os.path.isfile(path):
        raise ConfigError(f"no such file: {path}")
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == b"M3T1":
        arr = read_tensor(path)
        return {
            "kind": "tensor",
            "shape": list(arr.shape),
            "dtype": str(arr.dtype),
            "min": float(arr.min()) if arr.size else None,
            "max": float(arr.max()) if arr.size else None,
            "mean": float(arr.mean()) if arr.size else None,
        }
    if magic == b"M3C1":
        tensors, meta = read_checkpoint(path)
        return {
            "kind": "checkpoint",
            "meta": meta,
            "tensors": {k: list(v.shape) for k, v in sorted(tensors.items())},
        }
    raise ConfigError(f"unrecognized file magic {magic!r} in {path}")


def run(args: argparse.Namespace) -> dict:
    from . import experiments as X

    if args.command == "inspect":
        return _inspect(args.path)

    config = _build_config(args)
    out = args.out
    if args.command == "gen-data":
        return X.gen_data(config, out, previews=args.dump_steps > 0)
    if args.command == "train":
        return X.run_train(config, out)
    if args.command == "eval":
        from .train import load_checkpoint

        params, ck_config, variant, _ = load_checkpoint(args.checkpoint)
        if args.config is None and args.seed is None:
            config = ck_config
        return X.run_eval(config, out, params, variant, dump_count=args.dump_steps)
    if args.command == "exp-svd":
        return X.exp_svd(config, out)
    if args.command == "exp-ablate-modality":
        return X.exp_ablate_modality(config, out)
    if args.command == "exp-ablate-module":
        return X.exp_ablate_module(config, out)
    if args.command == "exp-theory":
        return X.exp_theory(config, out)
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv: "list[str] | None" = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        summary = run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ContractError as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return 3
    json.dump(summary, sys.stdout, indent=2, sort_keys=True)
    print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
