"""Worker pool for embarrassingly parallel loops (needle solves, splitting samples)."""
from __future__ import annotations
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from .errors import ConfigError

logger = logging.getLogger(__name__)

THREADS_ENV = "FINSGAP_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def worker_count(env: Optional[dict] = None) -> int:
    """FINSGAP_THREADS, or 1 when unset."""
    raw = (os.environ if env is None else env).get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        count = int(raw)
    except ValueError:
        raise ConfigError(f"expected a positive integer, got {raw!r}", field=THREADS_ENV) from None
    if count < 1:
        raise ConfigError(f"expected a positive integer, got {count}", field=THREADS_ENV)
    return count


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None) -> List[R]:
    """Ordered map; results come back in input order whatever the worker count."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug("parallel_map: %d items on %d threads", len(items), workers)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))
