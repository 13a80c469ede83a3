"""
Bounded worker pool with ordered results.

Per-image work (generation, climbing, evaluation) fans out over processes
when more than one worker is configured; results always come back in input
order so artifacts do not depend on scheduling.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, TypeVar

from app.core.config import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(func: Callable[[T], R], items: Iterable[T], workers: int = None) -> List[R]:
    """``[func(item) for item in items]``, optionally across ``workers`` processes."""
    workers = settings.workers if workers is None else workers
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    logger.debug(f"Dispatching {len(items)} tasks to {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
