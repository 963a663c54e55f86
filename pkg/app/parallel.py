import concurrent.futures
import logging
from typing import Callable, Iterable, TypeVar

from app.config import worker_count

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(func: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> list[R]:
    """Applies func to every item on a thread pool, returning results in input order.

    The first exception raised by a task propagates after the pool shuts down.
    """
    items = list(items)
    workers = min(worker_count(workers), max(1, len(items)))
    if workers == 1:
        return [func(item) for item in items]
    logger.debug(f"Dispatching {len(items)} tasks to {workers} threads")
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))
