"""
Order-preserving process-pool map.
"""

import logging
from multiprocessing import Pool
from typing import Callable, Iterable, List, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], tasks: Iterable[T], workers: int = 1) -> List[R]:
    """Apply ``fn`` to every task, in a process pool when ``workers > 1``.

    Results come back in task order, so callers that combine them in that
    order get output independent of the worker count. ``fn`` and the tasks
    must be picklable.
    """
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    nprocs = min(workers, len(tasks))
    logger.debug("Dispatching %d tasks to %d processes", len(tasks), nprocs)
    with Pool(processes=nprocs) as pool:
        return pool.map(fn, tasks)
