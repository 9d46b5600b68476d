"""Counter-based random streams keyed by (master seed, path index).

Every draw is a pure function of ``(seed, index, counter)``::

    base    = mix64(seed + G)
    key     = mix64(base + G * (index + 1))
    draw_k  = mix64(key + G * (k + 1))

where ``G = 0x9E3779B97F4A7C15`` and ``mix64`` is the SplitMix64 finalizer
(Steele, Lea & Flood, 2014). A stream is therefore SplitMix64 started from
``key``, and path ``i`` of a Monte Carlo run sees the same numbers no matter
how the index space is split across workers. Arithmetic is modulo 2**64.
"""

import math

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53
_TWO_PI = 2.0 * math.pi

MAX_SEED = 2**64 - 1


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def stream_key(seed, index):
    base = mix64(np.uint64(seed) + GOLDEN)
    return mix64(base + GOLDEN * (np.uint64(index) + _ONE))


@njit(cache=True)
def raw64(key, counter):
    return mix64(np.uint64(key) + GOLDEN * (np.uint64(counter) + _ONE))


@njit(cache=True)
def uniform(key, counter):
    """Uniform on the open interval (0, 1) from the top 53 bits."""
    return (float(raw64(key, counter) >> _S11) + 0.5) * _INV53


@njit(cache=True)
def exponential(key, counter, rate):
    return -math.log(uniform(key, counter)) / rate


@njit(cache=True)
def normal_pair(key, counter):
    """Two independent N(0, 1) draws (Box-Muller) from counters ``counter``, ``counter + 1``."""
    r = math.sqrt(-2.0 * math.log(uniform(key, counter)))
    theta = _TWO_PI * uniform(key, counter + 1)
    return r * math.cos(theta), r * math.sin(theta)


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be in [0, 2**64), got {seed}")
    return seed
