"""Deterministic seeding and chunked parallel evaluation.

Every stochastic routine splits its work into fixed-size chunks, each with
its own child seed spawned from one master seed.  Chunk boundaries never
depend on the number of worker threads, so results are identical for any
thread count.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from .errors import ParameterError

T = TypeVar("T")
R = TypeVar("R")

CHUNK = 16384

def seed_sequence(rng) -> np.random.SeedSequence:
    """Normalise an int, SeedSequence or Generator into a SeedSequence.

    A Generator is advanced by drawing fresh entropy from it, so repeated
    calls with the same generator give different (but reproducible) streams.
    """
    if isinstance(rng, np.random.SeedSequence):
        return rng
    if isinstance(rng, np.random.Generator):
        return np.random.SeedSequence(rng.integers(0, 2**63, size=4).tolist())
    if rng is None:
        raise ParameterError("a seed is required for stochastic computations")
    return np.random.SeedSequence(int(rng))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.PCG64(seed_sequence(rng)))


def chunk_sizes(n: int, chunk: int = CHUNK) -> list[int]:
    full, rest = divmod(n, chunk)
    return [chunk] * full + ([rest] if rest else [])


def default_threads() -> int:
    return os.cpu_count() or 1


def pmap(fn: Callable[[T], R], items: Sequence[T], threads: int | None = None) -> list[R]:
    """Ordered map over ``items``; a thread pool is used when threads > 1."""
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def chunked_seeds(rng, n: int, chunk: int = CHUNK) -> list[tuple[np.random.SeedSequence, int]]:
    """Pair each chunk size with its own child seed."""
    sizes = chunk_sizes(n, chunk)
    children = seed_sequence(rng).spawn(len(sizes))
    return list(zip(children, sizes))


def fsum_arrays(parts: Iterable[np.ndarray]) -> float:
    """Correctly rounded sum of several arrays, independent of chunking order."""
    parts = [np.asarray(p, dtype=float).ravel() for p in parts]
    if not parts:
        return 0.0
    return math.fsum(np.concatenate(parts))
