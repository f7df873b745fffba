"""Counter-based seed derivation.

Every random stream is keyed by ``(master, *counters, label)`` through
:class:`numpy.random.SeedSequence`, so a work item draws the same numbers no
matter which worker runs it or in which order. Labels are folded in with
CRC-32 so the key stays a tuple of integers.
"""
from __future__ import annotations

import zlib

import numpy as np

CHUNK = 1 << 16


def label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def seed_sequence(master: int, *counters: int, label: str = "") -> np.random.SeedSequence:
    if master < 0 or any(c < 0 for c in counters):
        raise ValueError("seeds and counters must be non-negative")
    return np.random.SeedSequence(entropy=int(master), spawn_key=(*map(int, counters), label_key(label)))


def generator(master: int, *counters: int, label: str = "") -> np.random.Generator:
    """A PCG64 generator for the stream ``(master, *counters, label)``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(master, *counters, label=label)))


def numba_seed(master: int, *counters: int, label: str = "") -> int:
    """A 32-bit seed for numba's per-thread Mersenne Twister, derived like :func:`generator`."""
    return int(seed_sequence(master, *counters, label=label).generate_state(1, dtype=np.uint32)[0])


def chunked_uniform(master: int, count: int, label: str, chunks=None) -> np.ndarray:
    """Uniform(0, 1) draws indexed by position, filled in independent chunks.

    Position ``i`` lives in chunk ``i // CHUNK`` whose stream depends only on
    ``(master, chunk, label)``. Passing a subset of chunk ids fills only
    those, which is how concurrent filling reproduces the sequential result.
    """
    out = np.full(count, np.nan)
    n_chunks = -(-count // CHUNK)
    for c in range(n_chunks) if chunks is None else chunks:
        lo, hi = c * CHUNK, min((c + 1) * CHUNK, count)
        out[lo:hi] = generator(master, c, label=label).random(hi - lo)
    return out
