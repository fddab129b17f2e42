"""Counter-based pseudorandom streams.

Every random draw in the lab is a pure function of (key, counter): the key
identifies a logical stream (environment sites, trajectory steps, replica
tags) and the counter indexes the draw within it.  This is what makes lazy
two-sided environments and partial experiment reruns replay exactly, with
no generator state to store or synchronize.

The mixer is the splitmix64 finalizer.  The same arithmetic is implemented
three ways (python ints, numpy uint64 arrays, numba kernels); they must stay
bit-identical, which tests/test_prng.py asserts.
"""

from __future__ import annotations

import hashlib

import numpy as np
from numba import njit

_MASK = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB

# uint64 constants for the numba/numpy variants
_U_GOLDEN = np.uint64(_GOLDEN)
_U_MUL1 = np.uint64(_MUL1)
_U_MUL2 = np.uint64(_MUL2)


def mix64(x: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    z = (x + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * _MUL1) & _MASK
    z = ((z ^ (z >> 27)) * _MUL2) & _MASK
    return z ^ (z >> 31)


def _part_to_u64(part) -> int:
    if isinstance(part, str):
        # stable across processes, unlike hash()
        return int.from_bytes(hashlib.blake2b(part.encode(), digest_size=8).digest(), "little")
    if isinstance(part, (int, np.integer)):
        return int(part) & _MASK
    raise TypeError(f"cannot derive a stream key from {type(part).__name__}")


def stream_key(seed: int, *parts) -> int:
    """Derive a stream key from a master seed and a path of tags.

    Tags may be ints (site/replica indices) or strings (stream names).
    """
    k = mix64(int(seed) & _MASK)
    for p in parts:
        k = mix64(k ^ _part_to_u64(p))
    return k


def u01(key: int, counter: int) -> float:
    """Uniform in [0, 1) for draw #counter of the stream `key`."""
    h = mix64((key ^ mix64(counter & _MASK)) & _MASK)
    return (h >> 11) * 2.0**-53


def u01_array(key: int, counters: np.ndarray) -> np.ndarray:
    """Vectorized u01 over an array of counters (any integer dtype)."""
    z = counters.astype(np.uint64) + _U_GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _U_MUL1
    z = (z ^ (z >> np.uint64(27))) * _U_MUL2
    z = z ^ (z >> np.uint64(31))
    z = (np.uint64(key) ^ z) + _U_GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _U_MUL1
    z = (z ^ (z >> np.uint64(27))) * _U_MUL2
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


def u01_keys(keys: np.ndarray, counter: int) -> np.ndarray:
    """Vectorized u01 over an array of keys at a fixed counter."""
    c = np.uint64(mix64(counter & _MASK))
    z = (keys.astype(np.uint64) ^ c) + _U_GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _U_MUL1
    z = (z ^ (z >> np.uint64(27))) * _U_MUL2
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


@njit(cache=True, inline="always")
def _nb_mix64(x):
    z = x + _U_GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _U_MUL1
    z = (z ^ (z >> np.uint64(27))) * _U_MUL2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def nb_u01(key, counter):
    """numba version of u01; key and counter are uint64."""
    h = _nb_mix64(key ^ _nb_mix64(counter))
    return np.float64(h >> np.uint64(11)) * 2.0**-53
