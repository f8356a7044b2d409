"""Counter-based random stream (SplitMix64 finalizer), usable inside numba.

Draw ``n`` of the stream with key ``k`` is ``mix(k + (n+1)*GAMMA)``; any draw
can be recomputed from (key, counter) alone, so replicas and chain segments
never depend on hidden generator state.
"""
import numpy as np
from numba import njit, uint64

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> uint64(30))) * _M1
    z = (z ^ (z >> uint64(27))) * _M2
    return z ^ (z >> uint64(31))


@njit(cache=True, inline="always")
def uniform(key, counter):
    """Uniform double in [0, 1) for stream position ``counter``."""
    z = mix64(key + (uint64(counter) + uint64(1)) * GAMMA)
    return float(z >> uint64(11)) * _INV53


def derive_key(seed, replica=0):
    """Stream key for (seed, replica); distinct pairs give unrelated streams."""
    s = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    r = np.uint64(int(replica) & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        k = _mix_py(s + GAMMA)
        k = _mix_py(k ^ (r * _M1 + GAMMA))
    return int(k)


def _mix_py(z):
    with np.errstate(over="ignore"):
        z = np.uint64(z)
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def derive_keys(seed, replicas):
    return np.array([derive_key(seed, r) for r in range(replicas)], dtype=np.uint64)


@njit(cache=True)
def uniforms(key, start, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = uniform(key, start + i)
    return out
