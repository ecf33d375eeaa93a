"""Seed management: one independent stream per (master seed, replica index)."""
from __future__ import annotations

import numba
import numpy as np

from ._rng import child_key, mix

_MASTER_SALT = np.uint64(0x6A09E667F3BCC909)


def as_key(value) -> np.uint64:
    if isinstance(value, np.uint64):
        return value
    value = int(value)
    if value < 0 or value >= 2**64:
        raise ValueError(f"seed/key out of range: {value}")
    return np.uint64(value)


@numba.njit(cache=True)
def _master(seed):
    return mix(seed ^ _MASTER_SALT)


@numba.njit(cache=True)
def _replica_keys(seed, start, count):
    base = _master(seed)
    out = np.empty(count, dtype=np.uint64)
    for i in range(count):
        out[i] = child_key(base, start + i)
    return out


def replica_key(master_seed, index: int) -> np.uint64:
    return _replica_keys(as_key(master_seed), np.int64(index), 1)[0]


def replica_keys(master_seed, count: int, start: int = 0) -> np.ndarray:
    """Keys for replicas ``start, ..., start + count - 1``; independent of chunking."""
    return _replica_keys(as_key(master_seed), np.int64(start), np.int64(count))


def seed_streams(master_seed, replica_index: int) -> np.random.Generator:
    """Counter-based numpy generator for one replica."""
    return np.random.Generator(np.random.Philox(key=int(replica_key(master_seed, replica_index))))


def chunked_map(fn, keys: np.ndarray, pool=None, chunk: int = 4096) -> list:
    """Apply ``fn`` to consecutive key blocks, in order, optionally on a pool."""
    parts = [keys[i:i + chunk] for i in range(0, keys.shape[0], chunk)]
    if pool is None:
        return [fn(p) for p in parts]
    return list(pool.map(fn, parts))
