"""Counter-based random variates addressed by (seed, replica, step, site, slot).

Every uniform used by the engine is a pure function of its address, so a
replica's randomness never depends on how replicas are scheduled, and two runs
that differ only in the infection rate see the same variate in every bond slot.
The mixing function is the SplitMix64 finalizer.
"""

from __future__ import annotations

import numba as nb
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_STEP_SALT = np.uint64(0xD1B54A32D192ED03)
_COORD_SALT = np.uint64(0x8CB92BA72F3D8DD7)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0


@nb.njit(nb.uint64(nb.uint64), nogil=True, cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(nb.uint64(nb.uint64, nb.uint64), nogil=True, cache=True)
def replica_key(seed, replica):
    return mix64(mix64(seed + GOLDEN) ^ (replica * _STEP_SALT + GOLDEN))


@nb.njit(nogil=True, cache=True)
def coord_hash(row):
    h = _COORD_SALT
    for c in row:
        h = mix64(h ^ nb.uint64(c)) + GOLDEN
    return h


@nb.njit(nb.uint64(nb.uint64, nb.int64, nb.uint64), nogil=True, cache=True)
def site_key(rkey, step, chash):
    return mix64(mix64(rkey ^ (nb.uint64(step) * _STEP_SALT)) ^ chash)


@nb.njit(nb.float64(nb.uint64, nb.int64), nogil=True, cache=True)
def uniform(key, slot):
    """Uniform on [0, 1) with 53 random bits; ``slot`` indexes the stream."""
    z = mix64(key + (nb.uint64(slot) + _ONE) * GOLDEN)
    return nb.float64(z >> _S11) * _INV53


def derive_replica_key(seed: int, replica: int) -> int:
    return int(replica_key(np.uint64(seed % 2**64), np.uint64(replica)))
