"""Counter-based hashing of integer keys into uniform variates.

Every random number is a pure function of ``(seed, stream, key...)``, so
overlapping regions of one realization agree and trials can run in any order
on any worker.
"""
from __future__ import annotations

import hashlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    # SplitMix64 finalizer; uint64 arithmetic wraps modulo 2**64.
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hash_keys(seed: int, stream: int, keys) -> np.ndarray:
    """Hash rows of an integer array into uint64 words.

    Parameters
    ----------
    seed, stream : int
        64-bit master seed and stream label.
    keys : array_like of int, shape (K, k)
        One key tuple per row; negative coordinates are allowed.
    """
    keys = np.atleast_2d(np.asarray(keys, dtype=np.int64))
    with np.errstate(over="ignore"):
        h = np.full(keys.shape[0], np.uint64(seed & _MASK64), dtype=np.uint64)
        h = _mix(h + _GOLDEN)
        h = _mix(h ^ (np.uint64(stream & _MASK64) + _GOLDEN))
        for col in range(keys.shape[1]):
            h = _mix(h ^ (keys[:, col].astype(np.uint64) + _GOLDEN))
    return h


def uniform_from_hash(h: np.ndarray) -> np.ndarray:
    """Map uint64 words to doubles in ``[0, 1)`` using the top 53 bits."""
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def counter_uniform(seed: int, stream: int, keys) -> np.ndarray:
    return uniform_from_hash(hash_keys(seed, stream, keys))


def derive_seed(master: int, *labels) -> int:
    """Child seed from a master seed and a sequence of labels (ints or str)."""
    parts = [str(int(master) & _MASK64)] + [str(x) for x in labels]
    digest = hashlib.sha256("/".join(parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")
