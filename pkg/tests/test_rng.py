from __future__ import annotations

import numpy as np
from hypothesis import given, strategies as st

from cplab import rng

MASK = 2**64 - 1
G = 0x9E3779B97F4A7C15


def ref_mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def ref_replica_key(seed: int, replica: int) -> int:
    return ref_mix(ref_mix((seed + G) & MASK) ^ ((replica * 0xD1B54A32D192ED03 + G) & MASK))


def ref_coord_hash(row) -> int:
    h = 0x8CB92BA72F3D8DD7
    for c in row:
        h = (ref_mix(h ^ (int(c) & MASK)) + G) & MASK
    return h


def ref_site_key(rkey: int, step: int, chash: int) -> int:
    return ref_mix(ref_mix(rkey ^ ((step * 0xD1B54A32D192ED03) & MASK)) ^ chash)


def ref_uniform(key: int, slot: int) -> float:
    return (ref_mix((key + (slot + 1) * G) & MASK) >> 11) / 2.0**53


def test_splitmix_known_value() -> None:
    # first output of the SplitMix64 generator seeded with 0
    assert int(rng.mix64(np.uint64(G))) == 0xE220A8397B1DCDAF


u64 = st.integers(0, MASK)


@given(u64, st.integers(0, 2**40), st.integers(0, 10**6), st.lists(st.integers(-10**9, 10**9), min_size=1, max_size=5),
       st.integers(0, 5000))
def test_matches_reference(seed: int, replica: int, step: int, coords, slot: int) -> None:
    rk = int(rng.replica_key(np.uint64(seed), np.uint64(replica)))
    assert rk == ref_replica_key(seed, replica) == rng.derive_replica_key(seed, replica)
    ch = int(rng.coord_hash(np.array(coords, dtype=np.int64)))
    assert ch == ref_coord_hash(coords)
    sk = int(rng.site_key(np.uint64(rk), step, np.uint64(ch)))
    assert sk == ref_site_key(rk, step, ch)
    u = rng.uniform(np.uint64(sk), slot)
    assert u == ref_uniform(sk, slot) and 0.0 <= u < 1.0


def test_uniform_moments() -> None:
    key = np.uint64(12345)
    us = np.array([rng.uniform(key, j) for j in range(20000)])
    assert abs(us.mean() - 0.5) < 4 * (1 / 12**0.5) / 20000**0.5
    assert abs(us.var() - 1 / 12) < 0.003
