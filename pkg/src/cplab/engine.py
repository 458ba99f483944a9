"""Forward cluster of the discretized contact process, slice by slice.

From each infected site ``x`` at step ``n`` the temporal bond to ``x`` at step
``n + 1`` is occupied with probability ``1 - eps`` and each spatial bond to
``x + y`` with probability ``lam * eps * D(y)``; all bonds are independent.
The next frontier is the set of heads of occupied bonds.

Variates come from :mod:`cplab.rng`, keyed per (replica, step, site).  Slot 0
decides the temporal bond.  On the uniform kernel (``fast`` path) slot 1 draws
the number of occupied spatial bonds by binomial inversion and slots ``2 + j``
drive a partial Fisher-Yates shuffle of the offsets; the chosen set for a
larger rate is a superset of the chosen set for a smaller one.  The
``bernoulli`` path decides spatial bond ``j`` with slot ``2 + j``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numba as nb
import numpy as np

from .model import ModelParams
from .rng import coord_hash, replica_key, site_key, uniform

COORD_LIMIT = 2**62
MAX_RATE = 500.0  # binomial inversion underflows beyond exp(-700)
DEFAULT_BLOCK = 1000


@nb.njit(nogil=True, cache=True)
def _binom_inv(u, m, q):
    if q <= 0.0:
        return 0
    if q >= 1.0:
        return m
    pmf = math.exp(m * math.log1p(-q))
    cdf = pmf
    ratio = q / (1.0 - q)
    k = 0
    while u >= cdf and k < m:
        pmf *= (m - k) / (k + 1.0) * ratio
        k += 1
        cdf += pmf
        if pmf < 1e-300 and k > m * q:
            break
    return k


@nb.njit(nogil=True, cache=True)
def _dedupe(buf, count):
    d = buf.shape[1]
    hs = np.empty(count, dtype=np.uint64)
    for r in range(count):
        hs[r] = coord_hash(buf[r])
    order = np.argsort(hs, kind="mergesort")
    out = np.empty((count, d), dtype=np.int64)
    out_h = np.empty(count, dtype=np.uint64)
    m = 0
    i = 0
    while i < count:
        h = hs[order[i]]
        g0 = m
        j = i
        while j < count and hs[order[j]] == h:
            row = buf[order[j]]
            dup = False
            for q in range(g0, m):
                same = True
                for c in range(d):
                    if out[q, c] != row[c]:
                        same = False
                        break
                if same:
                    dup = True
                    break
            if not dup:
                for c in range(d):
                    out[m, c] = row[c]
                out_h[m] = h
                m += 1
            j += 1
        i = j
    return out[:m], out_h[:m]


@nb.njit(nogil=True, cache=True)
def _grow(buf, need):
    if need <= buf.shape[0]:
        return buf
    new = np.empty((max(need, 2 * buf.shape[0]), buf.shape[1]), dtype=np.int64)
    new[: buf.shape[0]] = buf
    return new


@nb.njit(nogil=True, cache=True)
def _advance(coords, hashes, step, rkey, offsets, probs, p_temp, rate, fast, perm, swaps):
    """Frontier at ``step + 1`` given the (deduplicated) frontier at ``step``."""
    n_sites = coords.shape[0]
    d = coords.shape[1]
    m_off = offsets.shape[0]
    q = rate / m_off
    buf = np.empty((max(16, 3 * n_sites), d), dtype=np.int64)
    count = 0
    for i in range(n_sites):
        key = site_key(rkey, step, hashes[i])
        if uniform(key, 0) < p_temp:
            buf = _grow(buf, count + 1)
            for c in range(d):
                buf[count, c] = coords[i, c]
            count += 1
        if fast:
            k = _binom_inv(uniform(key, 1), m_off, q)
            if k == 0:
                continue
            buf = _grow(buf, count + k)
            for j in range(k):
                r = j + int(uniform(key, 2 + j) * (m_off - j))
                swaps[j] = r
                t = perm[j]
                perm[j] = perm[r]
                perm[r] = t
                y = perm[j]
                for c in range(d):
                    buf[count, c] = coords[i, c] + offsets[y, c]
                count += 1
            for j in range(k - 1, -1, -1):
                r = swaps[j]
                t = perm[j]
                perm[j] = perm[r]
                perm[r] = t
        else:
            for j in range(m_off):
                if uniform(key, 2 + j) < probs[j]:
                    buf = _grow(buf, count + 1)
                    for c in range(d):
                        buf[count, c] = coords[i, c] + offsets[j, c]
                    count += 1
    return _dedupe(buf, count)


@nb.njit(nogil=True, cache=True)
def _run_block(seed, rep_start, n_rep, n_max, offsets, probs, p_temp, rate, fast,
               rec_idx, n_rec, ks, mass_cap):
    d = offsets.shape[1]
    m_off = offsets.shape[0]
    nk = ks.shape[0]
    mass = np.zeros((n_rep, n_rec))
    sqd = np.zeros((n_rep, n_rec))
    ft = np.zeros((n_rep, n_rec, nk), dtype=np.complex128)
    died = np.full(n_rep, -1, dtype=np.int64)
    perm = np.arange(m_off)
    swaps = np.empty(m_off, dtype=np.int64)
    for r in range(n_rep):
        rkey = replica_key(seed, nb.uint64(rep_start + r))
        coords = np.zeros((1, d), dtype=np.int64)
        hashes = np.empty(1, dtype=np.uint64)
        hashes[0] = coord_hash(coords[0])
        for n in range(n_max + 1):
            if n > 0:
                coords, hashes = _advance(coords, hashes, n - 1, rkey, offsets, probs,
                                          p_temp, rate, fast, perm, swaps)
            m = coords.shape[0]
            if m == 0:
                died[r] = n
                break
            if mass_cap > 0 and m > mass_cap:
                return mass, sqd, ft, died, r
            j = rec_idx[n]
            if j < 0:
                continue
            mass[r, j] = m
            s2 = 0.0
            for i in range(m):
                for c in range(d):
                    s2 += coords[i, c] * coords[i, c]
            sqd[r, j] = s2
            for a in range(nk):
                re = 0.0
                im = 0.0
                for i in range(m):
                    ph = 0.0
                    for c in range(d):
                        ph += ks[a, c] * coords[i, c]
                    re += math.cos(ph)
                    im += math.sin(ph)
                ft[r, j, a] = complex(re, im)
    return mass, sqd, ft, died, -1


class CoordinateOverflow(OverflowError):
    pass


def _engine_arrays(params: ModelParams, method: str):
    kern = params.kernel
    if method == "auto":
        method = "fast" if kern.uniform else "bernoulli"
    if method not in ("fast", "bernoulli"):
        raise ValueError(f"unknown sampling method {method!r}")
    if method == "fast" and not kern.uniform:
        raise ValueError("the binomial fast path needs a uniform kernel")
    rate = params.lam * params.epsilon
    if method == "fast" and rate > MAX_RATE:
        raise ValueError(f"lam*eps = {rate} too large for binomial inversion")
    probs = rate * kern.weights
    return kern.offsets, probs, params.temporal_prob, rate, method == "fast"


def _check_horizon(params: ModelParams, n_max: int) -> None:
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    if n_max * params.L >= COORD_LIMIT:
        raise CoordinateOverflow("coordinates could exceed 2**62 within the horizon")


@dataclass(frozen=True, eq=False)
class Frontier:
    """Infected sites at step ``n`` (time ``n * eps``), one row per site."""

    n: int
    sites: np.ndarray
    hashes: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.hashes is None:
            object.__setattr__(
                self, "hashes",
                np.array([coord_hash(r) for r in self.sites], dtype=np.uint64),
            )

    @classmethod
    def origin(cls, d: int) -> "Frontier":
        return cls(0, np.zeros((1, d), dtype=np.int64))

    def __len__(self) -> int:
        return int(self.sites.shape[0])

    def as_set(self) -> set[tuple[int, ...]]:
        return {tuple(int(c) for c in row) for row in self.sites}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Frontier):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.sites, other.sites)


class BondStream:
    """Randomness of one replica: bond variates addressed by (step, site, slot)."""

    def __init__(self, seed: int, replica: int = 0):
        self.seed = int(seed) % 2**64
        self.replica = int(replica)
        self.key = np.uint64(replica_key(np.uint64(self.seed), np.uint64(self.replica)))


def step(frontier: Frontier, params: ModelParams, stream: BondStream,
         method: str = "auto") -> Frontier:
    offsets, probs, p_temp, rate, fast = _engine_arrays(params, method)
    _check_horizon(params, frontier.n + 1)
    if len(frontier) == 0:
        return Frontier(frontier.n + 1, frontier.sites.copy(), frontier.hashes.copy())
    perm = np.arange(offsets.shape[0])
    swaps = np.empty(offsets.shape[0], dtype=np.int64)
    sites, hashes = _advance(frontier.sites, frontier.hashes, frontier.n, stream.key,
                             offsets, probs, p_temp, rate, fast, perm, swaps)
    return Frontier(frontier.n + 1, sites, hashes)


@dataclass
class ClusterTrace:
    params: ModelParams
    seed: int
    replica: int
    slices: list[Frontier]
    died_at: int | None

    def sizes(self) -> list[int]:
        return [len(f) for f in self.slices]


def simulate(params: ModelParams, n_max: int, seed: int,
             visitor: Callable[[Frontier], None] | None = None, replica: int = 0,
             keep_slices: bool = True, method: str = "auto") -> ClusterTrace:
    """Evolve one replica from ``{o}``; stops at ``n_max`` or at extinction.

    With ``keep_slices`` every frontier (the empty one at death included) is
    stored; the visitor sees each frontier in increasing step order.
    """
    _check_horizon(params, n_max)
    stream = BondStream(seed, replica)
    front = Frontier.origin(params.d)
    slices: list[Frontier] = []
    died_at = None
    while True:
        if visitor is not None:
            visitor(front)
        if keep_slices:
            slices.append(front)
        if len(front) == 0:
            died_at = front.n
            break
        if front.n >= n_max:
            break
        front = step(front, params, stream, method)
    return ClusterTrace(params, stream.seed, replica, slices, died_at)


@dataclass
class BlockResult:
    """Per-replica observables of replicas ``start .. start + n - 1``.

    ``ft[r, j, a]`` is ``sum_{x in C_n} exp(i k_a . x)`` at the ``j``-th
    recorded step; ``mass`` and ``sqdisp`` hold ``|C_n|`` and
    ``sum_{x in C_n} |x|^2``.
    """

    start: int
    mass: np.ndarray
    sqdisp: np.ndarray
    ft: np.ndarray
    died_at: np.ndarray
    capped_replica: int = -1

    @property
    def n(self) -> int:
        return int(self.mass.shape[0])

    @property
    def capped(self) -> bool:
        return self.capped_replica >= 0


@dataclass(frozen=True)
class ReplicaPlan:
    """What to record for every replica of a run."""

    steps: tuple[int, ...]
    ks: np.ndarray  # (nk, d)
    n_max: int

    @classmethod
    def build(cls, steps, ks, d: int) -> "ReplicaPlan":
        steps = tuple(sorted({int(s) for s in steps}))
        if not steps:
            raise ValueError("no steps requested")
        if steps[0] < 0:
            raise ValueError("steps must be >= 0")
        ks = np.asarray(ks, dtype=np.float64).reshape(-1, d) if len(ks) else np.zeros((0, d))
        if ks.size and np.any(np.abs(ks) > np.pi):
            raise ValueError("momentum components must lie in [-pi, pi]")
        return cls(steps, ks, steps[-1])

    def step_index(self, n: int) -> int:
        return self.steps.index(int(n))


def run_block(params: ModelParams, plan: ReplicaPlan, seed: int, start: int, count: int,
              mass_cap: int = 0, method: str = "auto") -> BlockResult:
    offsets, probs, p_temp, rate, fast = _engine_arrays(params, method)
    _check_horizon(params, plan.n_max)
    rec_idx = np.full(plan.n_max + 1, -1, dtype=np.int64)
    for j, s in enumerate(plan.steps):
        rec_idx[s] = j
    mass, sqd, ft, died, capped = _run_block(
        np.uint64(int(seed) % 2**64), int(start), int(count), int(plan.n_max), offsets,
        probs, float(p_temp), float(rate), bool(fast), rec_idx, len(plan.steps),
        np.ascontiguousarray(plan.ks, dtype=np.float64), int(mass_cap),
    )
    return BlockResult(int(start), mass, sqd, ft, died, int(capped))


def block_ranges(n_runs: int, block_size: int = DEFAULT_BLOCK, first: int = 0):
    """Static replica-index blocks; independent of how many workers run them."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    out = []
    s = first
    end = first + n_runs
    while s < end:
        out.append((s, min(block_size, end - s)))
        s += block_size
    return out


def iter_blocks(params: ModelParams, plan: ReplicaPlan, seed: int, n_runs: int,
                workers: int = 1, block_size: int = DEFAULT_BLOCK, first: int = 0,
                mass_cap: int = 0, method: str = "auto") -> Iterator[BlockResult]:
    """Run all replica blocks and yield them in block order."""
    ranges = block_ranges(n_runs, block_size, first)

    def job(rng_):
        return run_block(params, plan, seed, rng_[0], rng_[1], mass_cap, method)

    if workers <= 1 or len(ranges) == 1:
        for r in ranges:
            res = job(r)
            yield res
            if res.capped:
                return
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # window of in-flight blocks keeps memory bounded
        pending = []
        it = iter(ranges)
        for r in it:
            pending.append(pool.submit(job, r))
            if len(pending) >= 2 * workers:
                break
        while pending:
            res = pending.pop(0).result()
            nxt = next(it, None)
            if nxt is not None:
                pending.append(pool.submit(job, nxt))
            yield res
            if res.capped:
                for p in pending:
                    p.cancel()
                return
