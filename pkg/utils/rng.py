"""
Counter-based random streams.

Paths are drawn in fixed blocks of PATH_BLOCK rows; block b of a run with seed s
comes from a Philox generator keyed by (s, b). Path p is therefore a pure
function of (seed, p), whatever the number of worker threads.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, TypeVar

import numpy as np

from models.errors import ValidationError

PATH_BLOCK = 4096
SEED_BITS = 64

R = TypeVar('R')


def check_seed(seed: int) -> int:
    if not isinstance(seed, (int, np.integer)) or not (0 <= int(seed) < 2 ** SEED_BITS):
        raise ValidationError(f"seed must be an integer in [0, 2^64), got {seed!r}", field='seed')
    return int(seed)


def block_generator(seed: int, block: int) -> np.random.Generator:
    key = (int(block) << SEED_BITS) | check_seed(seed)
    return np.random.Generator(np.random.Philox(key=key))


def block_normals(seed: int, block: int, rows: int, dim: int) -> np.ndarray:
    """Standard normals for `rows` paths of block `block`, `dim` numbers per path."""
    return block_generator(seed, block).standard_normal((rows, dim))


def map_blocks(seed: int, n_paths: int, dim: int, func: Callable[[int, np.ndarray], R],
               n_threads: int = 1) -> List[R]:
    """
    Apply func(start, z) to every block of standard normals, results in block order.

    z has shape (rows, dim) with rows <= PATH_BLOCK; start is the index of its first path.
    """
    if n_paths < 0:
        raise ValidationError("n_paths must be nonnegative", field='n_paths')
    check_seed(seed)
    starts = list(range(0, n_paths, PATH_BLOCK))

    def run(start):
        rows = min(PATH_BLOCK, n_paths - start)
        return func(start, block_normals(seed, start // PATH_BLOCK, rows, dim))

    if n_threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            return list(pool.map(run, starts))
    return [run(start) for start in starts]
