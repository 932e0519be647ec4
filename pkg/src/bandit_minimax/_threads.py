from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

from .model import ConfigError

ENV_VAR = "BANDIT_MINIMAX_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    """Explicit value, else $BANDIT_MINIMAX_THREADS, else 1; 0 means all cores."""
    if threads is None:
        env = os.environ.get(ENV_VAR, "").strip()
        try:
            threads = int(env) if env else 1
        except ValueError:
            raise ConfigError(f"{ENV_VAR} must be an integer, got {env!r}") from None
    if threads < 0:
        raise ConfigError(f"thread count must be >= 0, got {threads}")
    if threads == 0:
        threads = os.cpu_count() or 1
    return threads


def pmap(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> list[R]:
    """Order-preserving map, concurrent when more than one thread is allowed."""
    items = list(items)
    n = min(resolve_threads(threads), len(items))
    if n <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
