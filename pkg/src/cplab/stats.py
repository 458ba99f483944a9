"""Mergeable single-pass moment accumulators and Monte Carlo estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def _replica_last(xs: np.ndarray) -> np.ndarray:
    # reducing a contiguous trailing axis fixes the summation order, so a
    # statistic sums bit-identically whatever other axes ride along with it
    return np.ascontiguousarray(np.moveaxis(xs, 0, -1))


def _mean(xs: np.ndarray) -> np.ndarray:
    return xs.sum(axis=-1) / xs.shape[-1]


@dataclass(frozen=True)
class Estimate:
    mean: complex
    stderr: float
    n_runs: int
    channel: str = "real"
    flags: tuple[str, ...] = ()

    @property
    def value(self) -> float:
        return self.mean.real

    def within(self, truth: float, n_sigma: float) -> bool:
        """``|mean - truth| <= n_sigma * stderr`` (exact match when stderr is 0)."""
        return abs(self.mean - truth) <= n_sigma * self.stderr


class Accumulator:
    """Elementwise count, mean and centered second moment of array samples.

    Batches are folded in with the pairwise-stable update of Chan et al., so
    merging two accumulators equals accumulating the concatenated stream.
    """

    def __init__(self, shape=()):
        self.shape = tuple(shape)
        self.n = 0
        self.mean = np.zeros(self.shape)
        self.m2 = np.zeros(self.shape)

    def push(self, x) -> None:
        self.add_batch(np.asarray(x, dtype=np.float64)[None, ...])

    def add_batch(self, xs) -> None:
        xs = np.asarray(xs, dtype=np.float64)
        if xs.shape[0] == 0:
            return
        other = Accumulator(xs.shape[1:])
        other.n = xs.shape[0]
        xs = _replica_last(xs)
        other.mean = _mean(xs)
        other.m2 = ((xs - other.mean[..., None]) ** 2).sum(axis=-1)
        self.merge(other)

    def merge(self, other: "Accumulator") -> "Accumulator":
        if other.n == 0:
            return self
        if self.n == 0:
            self.shape = other.shape
            self.n, self.mean, self.m2 = other.n, other.mean.copy(), other.m2.copy()
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        self.mean = self.mean + delta * (other.n / n)
        self.m2 = self.m2 + other.m2 + delta**2 * (self.n * other.n / n)
        self.n = n
        return self

    def variance(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros(self.shape)
        return self.m2 / (self.n - 1)

    def stderr(self) -> np.ndarray:
        return np.sqrt(self.variance() / max(self.n, 1))

    def estimate(self, index=(), channel: str = "real") -> Estimate:
        return Estimate(complex(float(self.mean[index]), 0.0),
                        float(self.stderr()[index]), self.n, channel)


class PairAccumulator:
    """Joint moments of a numerator ``y`` and denominator ``x`` for ratios."""

    def __init__(self, shape=()):
        self.shape = tuple(shape)
        self.n = 0
        self.mx = np.zeros(self.shape)
        self.my = np.zeros(self.shape)
        self.cxx = np.zeros(self.shape)
        self.cyy = np.zeros(self.shape)
        self.cxy = np.zeros(self.shape)

    def add_batch(self, ys, xs) -> None:
        ys = np.asarray(ys, dtype=np.float64)
        xs = np.asarray(xs, dtype=np.float64)
        if xs.shape[0] == 0:
            return
        o = PairAccumulator(xs.shape[1:])
        o.n = xs.shape[0]
        xs, ys = _replica_last(xs), _replica_last(ys)
        o.mx, o.my = _mean(xs), _mean(ys)
        dx, dy = xs - o.mx[..., None], ys - o.my[..., None]
        o.cxx, o.cyy, o.cxy = (dx * dx).sum(-1), (dy * dy).sum(-1), (dx * dy).sum(-1)
        self.merge(o)

    def merge(self, other: "PairAccumulator") -> "PairAccumulator":
        if other.n == 0:
            return self
        if self.n == 0:
            self.shape = other.shape
            for a in ("n", "mx", "my", "cxx", "cyy", "cxy"):
                v = getattr(other, a)
                setattr(self, a, v.copy() if isinstance(v, np.ndarray) else v)
            return self
        n = self.n + other.n
        f = self.n * other.n / n
        dx = other.mx - self.mx
        dy = other.my - self.my
        self.mx = self.mx + dx * (other.n / n)
        self.my = self.my + dy * (other.n / n)
        self.cxx = self.cxx + other.cxx + dx * dx * f
        self.cyy = self.cyy + other.cyy + dy * dy * f
        self.cxy = self.cxy + other.cxy + dx * dy * f
        self.n = n
        return self

    def ratio(self, index=(), reliability_sigmas: float = 5.0) -> Estimate:
        """Delta-method estimate of ``E[y] / E[x]``."""
        n = self.n
        mx, my = float(self.mx[index]), float(self.my[index])
        div = max(n - 1, 1)
        vx, vy, cxy = (float(self.cxx[index]) / div, float(self.cyy[index]) / div,
                       float(self.cxy[index]) / div)
        se_x = math.sqrt(vx / n) if n else 0.0
        flags = ()
        if mx == 0.0:
            return Estimate(complex(math.nan, 0.0), math.inf, n, "ratio", ("unreliable",))
        if mx < reliability_sigmas * se_x:
            flags = ("unreliable",)
        r = my / mx
        var = (vy - 2 * r * cxy + r * r * vx) / (mx * mx * n)
        return Estimate(complex(r, 0.0), math.sqrt(max(var, 0.0)), n, "ratio", flags)


@dataclass(frozen=True)
class Row:
    t_steps: int
    k_index: int
    estimate: Estimate


@dataclass
class EstimateTable:
    """Estimates of one observable on a (step, momentum-index) grid."""

    observable: str
    epsilon: float
    rows: list[Row] = field(default_factory=list)

    def get(self, n: int, k_index: int = 0) -> Estimate:
        for r in self.rows:
            if r.t_steps == n and r.k_index == k_index:
                return r.estimate
        raise KeyError((n, k_index))

    def steps(self, k_index: int = 0) -> list[int]:
        return [r.t_steps for r in self.rows if r.k_index == k_index]

    def values(self, k_index: int = 0) -> np.ndarray:
        return np.array([r.estimate.value for r in self.rows if r.k_index == k_index])

    def stderrs(self, k_index: int = 0) -> np.ndarray:
        return np.array([r.estimate.stderr for r in self.rows if r.k_index == k_index])

    def __len__(self) -> int:
        return len(self.rows)
