"""Seeded Monte Carlo plumbing shared by calibration and risk estimation.

Draws are produced in fixed-size chunks. Chunk ``j`` of a stream gets its own
generator derived from ``(seed, stream, j)``, so results do not depend on how
many worker threads process the chunks. Per-chunk outputs are concatenated in
chunk order before any reduction.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 4096

# stream tags keep independent uses of one master seed apart
STREAM_DATA = 0
STREAM_JOINT = 1
STREAM_NULL = 2
STREAM_COIN = 3
STREAM_ENSEMBLE = 4


def n_threads() -> int:
    env = os.environ.get("PI_ORACLE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def chunk_rng(seed: int, stream: int, j: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFF, stream, j]))


def chunk_bounds(draws: int):
    for j, start in enumerate(range(0, draws, CHUNK)):
        yield j, start, min(draws, start + CHUNK)


def map_chunks(fn, draws: int):
    """Apply ``fn(j, start, stop)`` over all chunks and return results in chunk order."""
    bounds = list(chunk_bounds(int(draws)))
    workers = n_threads()
    if workers == 1 or len(bounds) == 1:
        return [fn(*b) for b in bounds]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda b: fn(*b), bounds))


def gaussian_draws(center: np.ndarray, sigma: float, draws: int, seed: int, stream: int = STREAM_DATA):
    """``draws`` rows of ``center + sigma * N(0, I)``; ``center`` is (n,) or (draws, n)."""
    center = np.asarray(center, dtype=float)
    n = center.shape[-1]
    out = np.empty((int(draws), n))
    for j, a, b in chunk_bounds(int(draws)):
        out[a:b] = chunk_rng(seed, stream, j).standard_normal((b - a, n))
    out *= sigma
    out += center
    return out


def uniform_indices(k: int, draws: int, seed: int, stream: int, p=None) -> np.ndarray:
    """Chunked i.i.d. indices in ``range(k)``, uniform or with probabilities ``p``."""
    out = np.empty(int(draws), dtype=np.intp)
    for j, a, b in chunk_bounds(int(draws)):
        rng = chunk_rng(seed, stream, j)
        if p is None:
            out[a:b] = rng.integers(0, k, size=b - a)
        else:
            out[a:b] = rng.choice(k, size=b - a, p=p)
    return out


def random_permutations(n: int, draws: int, seed: int, stream: int) -> np.ndarray:
    """Uniform permutations of ``range(n)``, one per row, by vectorized Fisher-Yates."""
    out = np.empty((int(draws), n), dtype=np.intp)
    for j, a, b in chunk_bounds(int(draws)):
        out[a:b] = fisher_yates(n, b - a, chunk_rng(seed, stream, j))
    return out


def fisher_yates(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    perm = np.tile(np.arange(n, dtype=np.intp), (m, 1))
    rows = np.arange(m)
    for i in range(n - 1, 0, -1):
        j = rng.integers(0, i + 1, size=m)
        tmp = perm[rows, j].copy()
        perm[rows, j] = perm[:, i]
        perm[:, i] = tmp
    return perm


def mean_and_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()), 0.0
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(x.size))
