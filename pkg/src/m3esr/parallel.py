"""Whole-item parallelism with a deterministic, index-ordered merge.

Work is partitioned by item index and every worker owns its items' seeds, so
results are identical for any thread count.  threads=1 is a plain loop.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

from .errors import ConfigError

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "M3ESR_THREADS"


def resolve_threads(requested: int | None) -> int:
    """Apply the environment override and clamp to a sane positive value."""
    value = requested if requested is not None else 1
    env = os.environ.get(THREADS_ENV)
    if env is not None:
        try:
            value = int(env)
        except ValueError as exc:
            raise ConfigError(
                f"{THREADS_ENV} must be an integer, got {env!r}"
            ) from exc
    if value < 1:
        raise ConfigError(f"thread count must be >= 1, got {value}")
    return value


def parallel_map(
    fn: Callable[[T], R], items: Sequence[T] | Iterable[T], threads: int = 1
) -> list[R]:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
