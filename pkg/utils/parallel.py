import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

import numpy as np

from settings import THREADS

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(func: Callable[[T], R], items: Iterable[T], threads: int = THREADS) -> List[R]:
    """Map func over items, in order; threads <= 1 runs inline"""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as executor:
        return list(executor.map(func, items))


def element_chunks(n_elements: int, threads: int = THREADS) -> List[np.ndarray]:
    """Split element ids into at most `threads` contiguous chunks"""
    n_chunks = max(1, min(threads, n_elements))
    return [chunk for chunk in np.array_split(np.arange(n_elements), n_chunks) if len(chunk)]
