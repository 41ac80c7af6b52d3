"""Deterministic parallel helpers.

Work is fanned out over a thread pool, but every result is collected in
input order and every sum is a pairwise tree of fixed shape, so the bits
of the output never depend on the number of workers.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from contextvars import ContextVar, copy_context
from typing import Callable, Iterable, Iterator, List, Optional, Sequence, TypeVar

import numpy as np

from .config import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

_default_workers: int = settings.threads
# per-run cap; concurrent runs each see their own value
_run_workers: ContextVar[Optional[int]] = ContextVar("run_workers", default=None)


def _checked(n: int) -> int:
    if n < 1:
        raise ValueError(f"Worker count must be positive, got {n}")
    return int(n)


def set_max_workers(n: int) -> None:
    """Process-wide default cap, used outside :func:`worker_limit` scopes."""
    global _default_workers
    _default_workers = _checked(n)
    logger.debug(f"Default worker cap set to {_default_workers}")


def get_max_workers() -> int:
    run = _run_workers.get()
    return run if run is not None else _default_workers


@contextmanager
def worker_limit(n: Optional[int]) -> Iterator[None]:
    """
    Cap the workers of every :func:`ordered_map` inside the block.

    The cap lives in a context variable, so runs on other threads keep theirs.
    ``None`` leaves the current cap in place.
    """
    if n is None:
        yield
        return
    token = _run_workers.set(_checked(n))
    try:
        yield
    finally:
        _run_workers.reset(token)


def ordered_map(fn: Callable[[T], R], items: Iterable[T], max_workers: Optional[int] = None) -> List[R]:
    """
    Apply ``fn`` to every item and return the results in input order.

    Args:
        fn: Pure function of one item
        items: Work items
        max_workers: Optional override of the current worker cap

    Returns:
        List of results, ``results[i] == fn(items[i])``
    """
    work = list(items)
    workers = min(max_workers or get_max_workers(), max(len(work), 1))
    if workers <= 1:
        return [fn(item) for item in work]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        # tasks run in copies of the caller context; nested calls see the run cap
        futures = [executor.submit(copy_context().run, fn, item) for item in work]
        return [f.result() for f in futures]


def tree_sum(arrays: Sequence[np.ndarray]) -> Optional[np.ndarray]:
    """
    Pairwise reduction of equally shaped arrays.

    The pairing is fixed by position: ``((a0+a1)+(a2+a3))+...``.

    Returns:
        The sum, or None for an empty sequence
    """
    level = list(arrays)
    if not level:
        return None
    while len(level) > 1:
        paired = [level[i] + level[i + 1] for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            paired.append(level[-1])
        level = paired
    return np.array(level[0], copy=True)
