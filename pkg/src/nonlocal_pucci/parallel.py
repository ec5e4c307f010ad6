"""Thread-pool sizing shared by the data-parallel sweeps."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_VAR = "NONLOCAL_THREADS"


def thread_count() -> int:
    """Worker count from ``NONLOCAL_THREADS`` (default 1, invalid values fall back to 1)."""
    raw = os.environ.get(ENV_VAR, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def pmap(fun, items) -> list:
    """Order-preserving map, threaded when ``NONLOCAL_THREADS`` > 1."""
    items = list(items)
    workers = thread_count()
    if workers <= 1 or len(items) <= 1:
        return [fun(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fun, items))
