"""Worker fan-out with deterministic, input-ordered results."""

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

T = TypeVar("T")
R = TypeVar("R")

WORKERS_ENV = "VISTANET_NUM_WORKERS"


def num_workers(default: int = 1) -> int:
    """Parallelism cap from VISTANET_NUM_WORKERS (defaults to serial)."""
    raw = os.getenv(WORKERS_ENV)
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, value)


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None) -> List[R]:
    """Map `fn` over `items`; results keep input order whatever the worker count."""
    items = list(items)
    workers = num_workers() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
