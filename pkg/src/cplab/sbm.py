"""Fourier transforms of the moment measures of the canonical measure of SBM.

``M1_t(k) = exp(-|k|^2 t / (2d))`` and, for ``l >= 2``,

    M^(l)_t(k) = int_0^{min t} du M1_u(k_1 + ... + k_l)
                 * sum_{I subset {2..l}, I nonempty} M^(|I|)_{t_I - u}(k_I)
                                                  * M^(l-|I|)_{t_{J-I} - u}(k_{J-I})

Each level is integrated with the composite trapezoid rule plus Richardson
extrapolation (Romberg), vectorized over all the shifts an outer level asks
for.  Everything is real.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

MAX_ORDER = 4


@dataclass(frozen=True)
class Quadrature:
    initial_panels: int = 4
    max_panels: int = 256
    refinement: int = 2
    tol: float = 1e-6

    def __post_init__(self):
        if self.refinement != 2:
            raise ValueError("Richardson extrapolation here assumes panel doubling")
        if self.initial_panels < 1 or self.max_panels < self.initial_panels:
            raise ValueError("need 1 <= initial_panels <= max_panels")


@dataclass(frozen=True)
class MomentQuery:
    times: tuple[float, ...]
    ks: tuple[tuple[float, ...], ...]
    d: int
    quadrature: Quadrature = field(default_factory=Quadrature)

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        ks = np.asarray(self.ks, dtype=np.float64).reshape(len(times), -1) if times else ()
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "ks", tuple(tuple(float(c) for c in row) for row in ks))
        if not 1 <= len(times) <= MAX_ORDER:
            raise ValueError(f"order l must lie in 1..{MAX_ORDER}, got {len(times)}")
        if any(t < 0 for t in times):
            raise ValueError("times must be >= 0")
        if self.d < 1 or any(len(k) != self.d for k in self.ks):
            raise ValueError("each momentum must be a d-vector")

    @property
    def l(self) -> int:
        return len(self.times)

    @classmethod
    def zero_momenta(cls, times, d: int, quadrature: Quadrature | None = None) -> "MomentQuery":
        ks = tuple((0.0,) * d for _ in times)
        return cls(tuple(times), ks, d, quadrature or Quadrature())


@dataclass(frozen=True)
class MomentResult:
    value: float
    error: float
    converged: bool = True
    flags: tuple[str, ...] = ()
    last_two: tuple[float, float] | None = None


class _Level:
    """Tracks Romberg convergence across a whole recursive evaluation."""

    def __init__(self, quad: Quadrature):
        self.quad = quad
        self.converged = True
        self.top_last_two: tuple[float, float] | None = None


def _rates(ks: np.ndarray, d: int) -> np.ndarray:
    return np.sum(ks * ks, axis=-1) / (2.0 * d)


def _splits(l: int):
    rest = list(range(1, l))
    for size in range(1, l):
        for I in itertools.combinations(rest, size):
            comp = tuple(i for i in range(l) if i not in I)
            yield I, comp


def _eval(times: np.ndarray, ks: np.ndarray, d: int, shifts: np.ndarray, lev: _Level,
          tol: float, top: bool = False) -> np.ndarray:
    """``M^(l)_{times - s}(ks)`` for every shift ``s`` in ``shifts``."""
    l = len(times)
    if l == 1:
        return np.exp(-_rates(ks[0], d) * (times[0] - shifts))
    span = np.min(times) - shifts
    total_rate = _rates(ks.sum(axis=0), d)
    splits = list(_splits(l))

    def integrand(x: np.ndarray) -> np.ndarray:
        # x: (S, P) nodes in [0, 1]; u = span * x
        u = span[:, None] * x
        sig = (shifts[:, None] + u).ravel()
        acc = np.zeros(sig.shape)
        for I, comp in splits:
            a = _eval(times[list(I)], ks[list(I)], d, sig, lev, tol * 0.1)
            b = _eval(times[list(comp)], ks[list(comp)], d, sig, lev, tol * 0.1)
            acc += a * b
        return np.exp(-total_rate * u) * acc.reshape(u.shape)

    quad = lev.quad
    n = quad.initial_panels
    x = np.linspace(0.0, 1.0, n + 1)[None, :].repeat(len(shifts), 0)
    f = integrand(x)
    trap = (f.sum(axis=1) - 0.5 * (f[:, 0] + f[:, -1])) / n
    table = [trap]
    history = [trap]
    while n < quad.max_panels:
        xm = (np.arange(n) + 0.5) / n
        fm = integrand(xm[None, :].repeat(len(shifts), 0))
        trap = 0.5 * trap + fm.sum(axis=1) / (2 * n)
        n *= 2
        new = [trap]
        for j, old in enumerate(table):
            new.append(new[j] + (new[j] - old) / (4.0 ** (j + 1) - 1.0))
        table = new
        history.append(table[-1])
        diff = np.abs(history[-1] - history[-2])
        if np.all(diff <= tol * np.maximum(np.abs(history[-1]), 1e-300)):
            break
    else:
        lev.converged = False
    if top:
        lev.top_last_two = (float(history[-2][0]) if len(history) > 1 else float(history[-1][0]),
                            float(history[-1][0]))
    return span * table[-1]


_cache: dict = {}


def m_hat(query: MomentQuery) -> MomentResult:
    """Evaluate ``M^(l)_t(k)`` with an error estimate and convergence flag.

    A zero time with ``l >= 2`` gives an empty integration range; the value is
    0 and the result carries the ``zero-time`` flag.
    """
    key = (query.times, query.ks, query.d, query.quadrature)
    hit = _cache.get(key)
    if hit is not None:
        return hit
    times = np.array(query.times)
    ks = np.array(query.ks, dtype=np.float64).reshape(query.l, query.d)
    if query.l == 1:
        res = MomentResult(float(np.exp(-_rates(ks[0], query.d) * times[0])), 0.0)
    elif np.min(times) == 0.0:
        res = MomentResult(0.0, 0.0, True, ("zero-time",))
    else:
        lev = _Level(query.quadrature)
        val = float(_eval(times, ks, query.d, np.zeros(1), lev, query.quadrature.tol, top=True)[0])
        a, b = lev.top_last_two if lev.top_last_two else (val, val)
        err = abs(b - a) * float(np.min(times))
        flags = () if lev.converged else ("nonconverged",)
        res = MomentResult(val, err, lev.converged, flags,
                           None if lev.converged else (a * float(np.min(times)), b * float(np.min(times))))
    _cache[key] = res
    return res


def m_hat_closed_form_l2(t1: float, t2: float, k1, k2, d: int) -> float:
    """Exact ``M^(2)_{(t1, t2)}(k1, k2)``."""
    k1 = np.asarray(k1, dtype=np.float64)
    k2 = np.asarray(k2, dtype=np.float64)
    a = float((k1 + k2) @ (k1 + k2)) / (2 * d)
    b = float(k1 @ k1) / (2 * d)
    c = float(k2 @ k2) / (2 * d)
    u = min(t1, t2)
    rate = b + c - a
    pre = math.exp(-b * t1 - c * t2)
    if abs(rate) < 1e-12:
        return u * pre
    return pre * math.expm1(rate * u) / rate
