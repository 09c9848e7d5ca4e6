"""Block-wise random streams and the worker fan-out for Monte Carlo runs.

Work is cut into fixed-size blocks. Block b always draws from the stream
SeedSequence(seed, spawn_key=(b,)), so the draws of a block do not depend on
which worker runs it or on how many workers there are. Results come back in
block order.
"""
import logging
from functools import partial
from multiprocessing import Pool, cpu_count
from typing import Callable, Iterator, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")

# Seeds are 64-bit unsigned
MAX_SEED = (1 << 64) - 1


def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return int(seed)


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Generator for block `block` of a run seeded with `seed`."""
    return np.random.default_rng(np.random.SeedSequence(check_seed(seed), spawn_key=(block,)))


def block_sizes(total: int, block_size: int) -> list[int]:
    """Split `total` items into full blocks plus a remainder."""
    if total < 1:
        raise ValueError(f"need at least one item, got {total}")
    full, rest = divmod(total, block_size)
    return [block_size] * full + ([rest] if rest else [])


def resolve_workers(workers: int) -> int:
    """0 means one worker per CPU."""
    if workers < 0:
        raise ValueError(f"workers must be >= 0, got {workers}")
    return workers or cpu_count()


def map_blocks(
    worker: Callable[..., T],
    total: int,
    block_size: int,
    seed: int,
    workers: int = 1,
    **kwargs,
) -> Iterator[T]:
    """Yield worker(block_index, size, seed, **kwargs) for every block, in order.

    `worker` and its keyword arguments must be picklable when workers > 1.
    """
    sizes = block_sizes(total, block_size)
    check_seed(seed)
    jobs = list(enumerate(sizes))
    task = partial(_run_block, worker, seed, kwargs)
    n_procs = min(resolve_workers(workers), len(jobs))
    if n_procs <= 1:
        yield from map(task, jobs)
        return
    logger.debug("dispatching %d blocks over %d processes", len(jobs), n_procs)
    with Pool(processes=n_procs) as pool:
        # imap keeps submission order
        yield from pool.imap(task, jobs)


def _run_block(worker, seed, kwargs, job):
    block, size = job
    return worker(block, size, seed, **kwargs)
