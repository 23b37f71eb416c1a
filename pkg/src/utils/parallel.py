"""
Seeded random streams and an order-preserving process pool for Monte Carlo
work split into independent units.
"""

import logging
from multiprocessing import Pool
from typing import Callable, Iterable, TypeVar
import numpy as np


logger = logging.getLogger(__name__)

RNG_NAME = "philox"
T = TypeVar("T")
R = TypeVar("R")

def stream_rng(seed: int, *keys: int) -> np.random.Generator:
    """
    Independent Philox stream for (seed, *keys), e.g. (seed, m, batch) or
    (seed, replicate). The same keys always yield the same stream.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *keys])))

def apply_pool(func: Callable[[T], R], inputs: Iterable[T], num_processes: int = 1) -> list[R]:
    """
    Map `func` over `inputs`, in a process pool when num_processes > 1.
    Results come back in input order whatever the completion order.
    """
    inputs = list(inputs)
    if num_processes <= 1 or len(inputs) <= 1:
        return [func(item) for item in inputs]

    logger.debug("Running %d work units on %d processes", len(inputs), num_processes)
    with Pool(min(num_processes, len(inputs))) as pool:
        return pool.map(func, inputs)
