"""Process-level parallelism with an environment cap.

``FRACTHICK_MAX_WORKERS`` limits the number of worker processes; unset,
the CPU count is used.  Results always come back in input order, so
outputs do not depend on the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

ENV_VAR = "FRACTHICK_MAX_WORKERS"

T = TypeVar("T")
R = TypeVar("R")


def max_workers() -> int:
    raw = os.environ.get(ENV_VAR)
    cpus = os.cpu_count() or 1
    if raw is None or raw.strip() == "":
        return cpus
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{ENV_VAR} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{ENV_VAR} must be a positive integer, got {raw!r}")
    return min(n, cpus)


def pmap(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    """``[fn(x) for x in items]``, spread over processes when allowed.

    ``fn`` and the items must be picklable when more than one worker runs.
    """
    items = list(items)
    n = max_workers() if workers is None else workers
    n = min(n, len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
