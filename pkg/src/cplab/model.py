"""Spread-out kernel and parameters of the discretized contact process.

The step distribution ``D`` is stored as an explicit list of lattice offsets
with weights, so the simulation engine can read it directly.  Only the uniform
cube kernel is provided.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

MAX_SUPPORT = 10**8


class CapacityError(ValueError):
    """A requested object would exceed a hard size cap."""


class InvalidParameters(ValueError):
    """Model parameters violate a validity constraint."""


@dataclass(frozen=True, eq=False)
class Kernel:
    d: int
    L: int
    offsets: np.ndarray  # (M, d) int64
    weights: np.ndarray  # (M,) float64
    sigma2: float
    sup_norm: float
    l2_norm_sq: float
    uniform: bool = True

    @property
    def size(self) -> int:
        return int(self.offsets.shape[0])

    def weight(self, x) -> float:
        """D(x) for a single offset; zero off the support."""
        x = np.asarray(x, dtype=np.int64).reshape(self.d)
        if self.uniform:
            linf = int(np.max(np.abs(x))) if self.d else 0
            return float(self.weights[0]) if 0 < linf <= self.L else 0.0
        hit = np.flatnonzero(np.all(self.offsets == x, axis=1))
        return float(self.weights[hit[0]]) if hit.size else 0.0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Kernel):
            return NotImplemented
        return (
            self.d == other.d
            and self.L == other.L
            and self.uniform == other.uniform
            and self.sigma2 == other.sigma2
            and self.sup_norm == other.sup_norm
            and self.l2_norm_sq == other.l2_norm_sq
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.weights, other.weights)
        )

    def __hash__(self) -> int:
        return hash((self.d, self.L, self.uniform, self.size))


def uniform_support_size(d: int, L: int) -> int:
    return (2 * L + 1) ** d - 1


def uniform_kernel(d: int, L: int) -> Kernel:
    """Uniform distribution on ``{x : 0 < |x|_inf <= L}``."""
    if d < 1 or L < 1:
        raise InvalidParameters(f"need d >= 1 and L >= 1, got d={d}, L={L}")
    m = uniform_support_size(d, L)
    if m > MAX_SUPPORT:
        raise CapacityError(f"support of {m} offsets exceeds cap {MAX_SUPPORT}")
    side = np.arange(-L, L + 1, dtype=np.int64)
    grid = np.stack(np.meshgrid(*([side] * d), indexing="ij"), axis=-1).reshape(-1, d)
    offsets = grid[np.any(grid != 0, axis=1)]
    w = 1.0 / m
    weights = np.full(m, w)
    # integer sum then one division: correctly rounded
    sigma2 = int(np.sum(offsets * offsets)) / m
    return Kernel(
        d=d,
        L=L,
        offsets=offsets,
        weights=weights,
        sigma2=sigma2,
        sup_norm=w,
        l2_norm_sq=1.0 / m,
        uniform=True,
    )


@dataclass(frozen=True)
class RangeScaling:
    """Range grows with the time scale as ``L_T = L1 * T**b``."""

    L1: int
    b: float
    T: float

    def L_T(self) -> int:
        return math.ceil(self.L1 * self.T**self.b)

    def alpha(self, d: int) -> float:
        return self.b * d + (d - 4) / 2

    def beta_1(self, d: int) -> float:
        return float(self.L1) ** (-d)

    def beta_T(self, d: int) -> float:
        return self.beta_1(d) * self.T ** (-self.b * d)


@dataclass(frozen=True)
class ModelParams:
    kernel: Kernel
    epsilon: float
    lam: float
    scaling: RangeScaling | None = field(default=None)

    def __post_init__(self):
        eps, lam = self.epsilon, self.lam
        if not (0.0 < eps <= 1.0):
            raise InvalidParameters(f"epsilon must lie in (0, 1], got {eps}")
        if not (lam >= 0.0 and math.isfinite(lam)):
            raise InvalidParameters(f"lambda must be finite and >= 0, got {lam}")
        if self.kernel.uniform:
            # exact rational form of lam*eps*sup_norm <= 1
            ok = Fraction(lam) * Fraction(eps) <= self.kernel.size
        else:
            ok = lam * eps * self.kernel.sup_norm <= 1.0
        if not ok:
            raise InvalidParameters(
                f"spatial bond probability lam*eps*|D|_inf exceeds 1 "
                f"(lam={lam}, eps={eps}, |D|_inf={self.kernel.sup_norm})"
            )
        if self.scaling is not None:
            d = self.kernel.d
            if self.kernel.L != self.scaling.L_T():
                raise InvalidParameters("kernel range does not match ceil(L1 * T**b)")
            if d <= 4 and not self.scaling.alpha(d) > 0:
                raise InvalidParameters(
                    f"range scaling needs alpha = b*d + (d-4)/2 > 0 for d <= 4, "
                    f"got {self.scaling.alpha(d)}"
                )

    @classmethod
    def uniform(cls, d: int, L: int, epsilon: float, lam: float) -> "ModelParams":
        return cls(uniform_kernel(d, L), float(epsilon), float(lam))

    @classmethod
    def range_scaled(
        cls, d: int, L1: int, b: float, T: float, epsilon: float, lam: float
    ) -> "ModelParams":
        sc = RangeScaling(int(L1), float(b), float(T))
        return cls(uniform_kernel(d, sc.L_T()), float(epsilon), float(lam), sc)

    def with_lambda(self, lam: float) -> "ModelParams":
        return ModelParams(self.kernel, self.epsilon, float(lam), self.scaling)

    @property
    def d(self) -> int:
        return self.kernel.d

    @property
    def L(self) -> int:
        return self.kernel.L

    @property
    def beta(self) -> float:
        return float(self.kernel.L) ** (-self.kernel.d)

    @property
    def alpha(self) -> float | None:
        return None if self.scaling is None else self.scaling.alpha(self.d)

    @property
    def temporal_prob(self) -> float:
        return 1.0 - self.epsilon

    @property
    def p_hat0(self) -> float:
        """Fourier transform of the bond probabilities at k = 0."""
        return 1.0 - self.epsilon + self.lam * self.epsilon

    @property
    def sum_p_sq(self) -> float:
        return (1.0 - self.epsilon) ** 2 + (self.lam * self.epsilon) ** 2 * self.kernel.l2_norm_sq


def bond_prob(params: ModelParams, x) -> float:
    """Occupation probability of the bond from (o, t) to (x, t + eps)."""
    x = np.asarray(x, dtype=np.int64).reshape(params.d)
    if not np.any(x):
        return 1.0 - params.epsilon
    return params.lam * params.epsilon * params.kernel.weight(x)


def one_step_mean(params: ModelParams) -> float:
    """Expected cluster size after one step from a single infected site."""
    return (1.0 - params.epsilon) + params.lam * params.epsilon
