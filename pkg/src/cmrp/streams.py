"""Deterministic random substreams for block-parallel Monte Carlo.

Paths are generated in fixed-size blocks. Block ``i`` of a run seeded with
``seed`` always draws from the generator returned by ``block_rng(seed, i)``,
so results do not depend on how many worker threads process the blocks.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

BLOCK_SIZE = 2048
_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One round of the splitmix64 output function on a 64-bit integer."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int, salt: int = 0) -> int:
    """Mix a substream index (and optional salt) into a master seed."""
    h = splitmix64(seed & _MASK64)
    h = splitmix64(h ^ (salt & _MASK64))
    return splitmix64(h ^ (index & _MASK64))


def block_rng(seed: int, index: int, salt: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, index, salt)))


def block_sizes(n: int, block: int = BLOCK_SIZE) -> list[int]:
    if n < 0:
        raise ValueError("n must be nonnegative")
    full, rest = divmod(n, block)
    return [block] * full + ([rest] if rest else [])


def default_threads() -> int:
    return os.cpu_count() or 1


def map_blocks(
    fn: Callable[[int, int, np.random.Generator], T],
    n: int,
    seed: int,
    threads: int = 1,
    salt: int = 0,
) -> list[T]:
    """Run ``fn(block_index, block_n, rng)`` over all blocks of ``n`` paths.

    Results come back in block order regardless of ``threads``.
    """
    sizes = block_sizes(n)

    def work(i: int) -> T:
        return fn(i, sizes[i], block_rng(seed, i, salt))

    if threads <= 1 or len(sizes) <= 1:
        return [work(i) for i in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, range(len(sizes))))


def pairwise_sum(values: Sequence[float] | np.ndarray) -> float:
    """Order-fixed pairwise summation (numpy's reduction is pairwise)."""
    return float(np.sum(np.asarray(values, dtype=float)))
