"""Scalar bound kernels, their sums, and the leading vertex diagram.

Times live on the grid ``eps * Z_+`` and are handled internally as integer
indices ``j`` with ``s = j * eps``.  The summed kernels are evaluated in two
independent ways: a literal double loop over the grid (``method="direct"``)
and a separable evaluation that uses prefix sums and exact Hurwitz-zeta tails
(``method="fast"``).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import zeta

from .model import ModelParams, bond_prob
from .stats import EstimateTable

MAX_TERMS = 10**8


class GridTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class BoundKernelParams:
    d: int
    eps: float
    kappa: float = 0.0
    horizon: float | None = None
    beta: float | None = None
    beta_T: float | None = None
    beta_hat_T: float | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not 0.0 < self.eps <= 1.0:
            raise ValueError("eps must lie in (0, 1]")
        if not 0.0 <= self.kappa < 1.0:
            raise ValueError("kappa must lie in [0, 1)")


def _grid_index(s: float, eps: float) -> int:
    j = round(s / eps)
    if abs(j * eps - s) > 1e-9 * max(1.0, abs(s)):
        raise ValueError(f"time {s} is not a multiple of eps={eps}")
    return int(j)


def n_exponent(j1, j2, shift: int = 0):
    """Power of eps carried by ``b`` at grid indices (j1, j2).

    ``shift`` = j reproduces the exponent of the j-shifted kernel, i.e. the
    corner moves from ``2 eps`` to ``(2 - j) eps``.
    """
    j1 = np.asarray(j1)
    j2 = np.asarray(j2)
    corner = 2 - shift
    return 3 - (j1 == j2).astype(int) - ((j1 == corner) & (j2 == corner)).astype(int)


def _shape(j1, j2, eps: float, d: int):
    """The eps-free factor of ``b``; zero where ``s1 > s2``."""
    s1 = np.asarray(j1, dtype=np.float64) * eps
    s2 = np.asarray(j2, dtype=np.float64) * eps
    head = (1.0 + s1) ** (-(d - 2) / 2.0)
    if d > 2:
        tail = (1.0 + np.maximum(s2 - s1, 0.0)) ** (-(d - 2) / 2.0)
    elif d == 2:
        tail = np.log1p(s2)
    else:
        tail = (1.0 + s2) ** ((2.0 - d) / 2.0)
    return np.where(s1 <= s2 + 1e-12 * eps, head * tail, 0.0)


def _b_grid(j1, j2, eps: float, d: int, shift: int = 0):
    return eps ** n_exponent(j1, j2, shift).astype(np.float64) * _shape(j1, j2, eps, d)


def b_kernel(s1: float, s2: float, params: BoundKernelParams) -> float:
    j1, j2 = _grid_index(s1, params.eps), _grid_index(s2, params.eps)
    return float(_b_grid(j1, j2, params.eps, params.d))


def b_tilde(j: int, s1: float, s2: float, params: BoundKernelParams) -> float:
    """Kernel with the exponent count of ``b`` at times shifted by ``j * eps``."""
    if j not in (0, 1, 2):
        raise ValueError("shift j must be 0, 1 or 2")
    j1, j2 = _grid_index(s1, params.eps), _grid_index(s2, params.eps)
    return float(_b_grid(j1, j2, params.eps, params.d, shift=j))


def delta_t(t: float, d: int) -> float:
    if t < 0:
        raise ValueError("t must be >= 0")
    if d > 6:
        return 1.0
    if d == 6:
        return math.log1p(t)
    return (1.0 + t) ** min(1.0, (6 - d) / 2.0)


def _check_terms(n_points: int, squared: bool) -> None:
    terms = n_points * n_points if squared else n_points
    if terms > MAX_TERMS:
        raise GridTooLarge(f"{terms} terms exceed the cap of {MAX_TERMS}")


def _direct_pairs(jmax: int, eps: float, d: int, weight, chunk: int = 2048) -> float:
    """Literal sum of ``weight(j1, j2)`` over ``2 <= j1, j2 <= jmax``."""
    if jmax < 2:
        return 0.0
    _check_terms(jmax - 1, squared=True)
    j2 = np.arange(2, jmax + 1)
    parts = []
    for lo in range(2, jmax + 1, chunk):
        j1 = np.arange(lo, min(lo + chunk, jmax + 1))[:, None]
        parts.append(math.fsum(np.asarray(weight(j1, j2[None, :]), dtype=np.float64).ravel()))
    return math.fsum(parts)


# separable pieces for d > 2: b = eps^n * f(j1) * g(j2 - j1)

def _f(j, eps, d):
    return (1.0 + np.asarray(j, dtype=np.float64) * eps) ** (-(d - 2) / 2.0)


def _g_tail(m, eps, d):
    """``sum_{i >= m} (1 + i eps)^{-(d-2)/2}`` (needs d > 4)."""
    a = (d - 2) / 2.0
    return eps ** (-a) * zeta(a, np.asarray(m, dtype=np.float64) + 1.0 / eps)


def _g_range(m_lo, m_hi, eps, d):
    """``sum_{i = m_lo}^{m_hi} (1 + i eps)^{-(d-2)/2}`` for d > 4."""
    return _g_tail(m_lo, eps, d) - _g_tail(np.asarray(m_hi) + 1, eps, d)


def tail_sum(s: float, d: int, eps: float, method: str = "fast",
             horizon: float | None = None) -> float:
    """``sum_{s1, s2 >= 2 eps, max(s1, s2) >= s} b_{s1,s2}``.

    The sum runs to infinity unless ``horizon`` caps ``s2``; the direct method
    requires a horizon.
    """
    if d <= 4:
        raise ValueError("the tail sum converges only for d > 4")
    J = max(math.ceil(s / eps - 1e-9), 2)
    H = None if horizon is None else math.floor(horizon / eps + 1e-9)
    if method == "direct":
        if H is None:
            raise ValueError("direct summation needs a finite horizon")
        return _direct_pairs(H, eps, d,
                             lambda a, b: np.where(np.maximum(a, b) >= J,
                                                   _b_grid(a, b, eps, d), 0.0))
    if H is not None and H < J:
        return 0.0
    # rows j1 < J: only i >= J - j1 >= 1 (eps^3)
    j_lo = np.arange(2, J)
    if H is None:
        inner_lo = _g_tail(J - j_lo, eps, d)
    else:
        inner_lo = _g_range(J - j_lo, H - j_lo, eps, d)
    part_lo = eps**3 * math.fsum(_f(j_lo, eps, d) * inner_lo)
    # rows j1 >= J: diagonal term (eps^2, or eps at the corner) + off-diagonal eps^3
    if H is None:
        a = (d - 2) / 2.0
        f_sum = eps ** (-a) * float(zeta(a, J + 1.0 / eps))
        off = eps**3 * float(_g_tail(1, eps, d))
        part_hi = f_sum * (eps**2 + off)
    else:
        j_hi = np.arange(J, H + 1)
        off = np.where(H - j_hi >= 1, _g_range(1, np.maximum(H - j_hi, 1), eps, d), 0.0)
        part_hi = math.fsum(_f(j_hi, eps, d) * (eps**2 + eps**3 * off))
    if J == 2:
        part_hi += (eps - eps**2) * float(_f(2, eps, d))
    return part_lo + part_hi


def weighted_square_sum(s: float, d: int, eps: float, method: str = "fast") -> float:
    """``sum_{s1, s2 >= 2 eps, max(s1, s2) <= s} s_1 (b_{s1,s2} + b_{s2,s1})``."""
    if d <= 4:
        raise ValueError("this sum is the d > 4 statement")
    N = math.floor(s / eps + 1e-9)
    if N < 2:
        return 0.0
    if method == "direct":
        return _direct_pairs(N, eps, d, lambda a, b: (a * eps) * (_b_grid(a, b, eps, d)
                                                                  + _b_grid(b, a, eps, d)))
    _check_terms(N, squared=False)
    # by symmetry the s_1-weighted sum equals sum_{j1 <= j2} (s1 + s2) b
    i = np.arange(0, N - 1, dtype=np.float64)
    g = (1.0 + i * eps) ** (-(d - 2) / 2.0)
    c0 = np.cumsum(g)
    c1 = np.cumsum(i * g)
    j1 = np.arange(2, N + 1)
    m = N - j1  # i runs over 0..m
    f = _f(j1, eps, d)
    s1 = j1 * eps
    inner = 2.0 * s1 * c0[m] + eps * c1[m]
    total = eps**3 * math.fsum(f * inner)
    # diagonal terms carry eps^2 (eps at the corner), weight 2 s1
    total += (eps**2 - eps**3) * math.fsum(f * 2.0 * s1)
    total += (eps - eps**2) * float(_f(2, eps, d)) * 4.0 * eps
    return total


def _triangle_sum(N: int, eps: float, d: int) -> float:
    """``sum_{2 <= j1 <= j2 <= N} b`` for any d, separably."""
    j1 = np.arange(2, N + 1)
    if d > 2:
        i = np.arange(0, N - 1, dtype=np.float64)
        c0 = np.cumsum((1.0 + i * eps) ** (-(d - 2) / 2.0))
        inner = c0[N - j1]
    else:
        j2 = np.arange(2, N + 1, dtype=np.float64) * eps
        h = np.log1p(j2) if d == 2 else (1.0 + j2) ** ((2.0 - d) / 2.0)
        suffix = np.cumsum(h[::-1])[::-1]
        inner = suffix[j1 - 2]
    f = (1.0 + j1 * eps) ** (-(d - 2) / 2.0)
    total = eps**3 * math.fsum(f * inner)
    diag = _shape(j1, j1, eps, d)
    total += (eps**2 - eps**3) * math.fsum(diag)
    total += (eps - eps**2) * float(_shape(2, 2, eps, d))
    return total


def lowdim_sum(d: int, eps: float, T: float, beta_T: float, method: str = "fast") -> float:
    """``beta_T sum (delta_{s1,s2} + beta_T)(b + b^T)`` over ``[2 eps, T log T]^2``
    without the corner ``(2 eps, 2 eps)``."""
    if d > 4:
        raise ValueError("the low-dimensional sum is the d <= 4 statement")
    N = math.floor(T * math.log(T) / eps + 1e-9)
    if N < 2:
        return 0.0
    if method == "direct":
        def w(a, b):
            kern = _b_grid(a, b, eps, d) + _b_grid(b, a, eps, d)
            corner = (a == 2) & (b == 2)
            return np.where(corner, 0.0, ((a == b) + beta_T) * kern)
        return beta_T * _direct_pairs(N, eps, d, w)
    _check_terms(N, squared=False)
    j = np.arange(3, N + 1)
    diag = math.fsum(eps**2 * _shape(j, j, eps, d))
    tri = _triangle_sum(N, eps, d) - eps * float(_shape(2, 2, eps, d))
    return beta_T * (2.0 * diag + 2.0 * beta_T * tri)


@dataclass(frozen=True)
class LemmaSums:
    s: float
    sum1: float | None
    sum2: float | None
    lowdim: float | None
    env1: float | None
    env2: float | None
    env_low: float | None

    @property
    def ratio1(self) -> float | None:
        return None if self.sum1 is None else self.sum1 / self.env1

    @property
    def ratio2(self) -> float | None:
        return None if self.sum2 is None else self.sum2 / self.env2

    @property
    def ratio_low(self) -> float | None:
        return None if self.lowdim is None else self.lowdim / self.env_low


def lemma_sums(params: BoundKernelParams, s: float | None = None, T: float | None = None,
               method: str = "fast") -> LemmaSums:
    """Left-hand sides of the b-sum bounds with their envelopes for ratio reports.

    For ``d > 4`` pass ``s``; the tail sum runs to ``params.horizon`` (to
    infinity when it is None).  For ``d <= 4`` pass ``T`` and set ``beta_T``
    and ``beta_hat_T`` on the parameters.
    """
    d, eps = params.d, params.eps
    if d > 4:
        if s is None:
            raise ValueError("d > 4 sums need s")
        s1 = weighted_square_sum(s, d, eps, method)
        s2 = tail_sum(s, d, eps, method, horizon=params.horizon)
        return LemmaSums(s, s1, s2, None, eps * s ** (1 - params.kappa),
                         eps * s ** (-params.kappa), None)
    if T is None or params.beta_T is None or params.beta_hat_T is None:
        raise ValueError("d <= 4 sum needs T, beta_T and beta_hat_T")
    low = lowdim_sum(d, eps, T, params.beta_T, method)
    return LemmaSums(T, None, None, low, None, None, params.beta_hat_T * eps)


def psi_main_term_hat00(params: ModelParams) -> float:
    """Leading vertex diagram ``psi_{2eps,2eps}`` summed over both endpoints."""
    p0 = params.p_hat0
    return p0 * (p0 * p0 - params.sum_p_sq)


def psi_main_term_brute(params: ModelParams) -> float:
    """Literal triple sum of ``p(u) p(y1-u) p(y2-u) (1 - delta_{y1,y2})``.

    ``u`` runs over the one-step support and ``y1, y2`` over the box of radius
    2L; ``p`` is tabulated site by site from the bond probabilities.
    """
    d, L = params.d, params.L
    R = 3 * L
    grid = np.array(list(itertools.product(range(-R, R + 1), repeat=d)), dtype=np.int64)
    table = np.array([bond_prob(params, x) for x in grid]).reshape((2 * R + 1,) * d)
    box = np.array(list(itertools.product(range(-2 * L, 2 * L + 1), repeat=d)), dtype=np.int64)
    off_diag = ~np.eye(len(box), dtype=bool)
    total = []
    for u in itertools.product(range(-L, L + 1), repeat=d):
        pu = table[tuple(np.array(u) + R)]
        if pu == 0.0:
            continue
        idx = (box - np.array(u) + R).T
        py = table[tuple(idx)]
        total.append(pu * float(np.sum(np.outer(py, py)[off_diag])))
    return math.fsum(total)


@dataclass(frozen=True)
class TreeBound:
    n: int
    value: float
    stderr: float


def tree_graph_bound(two_point: EstimateTable, params: ModelParams, n: int) -> TreeBound:
    """Plug-in upper bound ``2 sum_{m<n} eps tau_m p_hat(0) tau_{n-m}^2`` on
    ``tau^(3)_{(n,n)}(0,0)``; the error treats the inputs as fully correlated."""
    if params.lam <= 0.0:
        raise ValueError("the tree-graph comparison needs lambda > 0")
    steps = set(two_point.steps())
    missing = [m for m in range(0, n + 1) if m not in steps]
    if missing:
        raise KeyError(f"two-point estimates missing at steps {missing[:5]}")
    tau = np.array([two_point.get(m).value for m in range(n + 1)])
    se = np.array([two_point.get(m).stderr for m in range(n + 1)])
    c = 2.0 * params.epsilon * params.p_hat0
    m = np.arange(n)
    value = c * math.fsum(tau[m] * tau[n - m] ** 2)
    grad = np.zeros(n + 1)
    np.add.at(grad, m, c * tau[n - m] ** 2)
    np.add.at(grad, n - m, 2.0 * c * tau[m] * tau[n - m])
    return TreeBound(n, value, float(np.sum(np.abs(grad) * se)))
