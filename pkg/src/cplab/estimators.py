"""Monte Carlo estimators of r-point functions and the fitted scaling constants.

All observables of a replica are read from one simulated cluster, which is
what makes joint-connection probabilities estimable as products of
single-target sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .engine import DEFAULT_BLOCK, BlockResult, ReplicaPlan, iter_blocks
from .model import ModelParams
from .stats import Accumulator, Estimate, EstimateTable, PairAccumulator, Row

Reducer = Callable[[BlockResult], dict]


class MomentumClampError(ValueError):
    """A rescaled momentum falls outside [-pi, pi]^d."""


def accumulate(params: ModelParams, plan: ReplicaPlan, n_runs: int, seed: int,
               reducer: Reducer, workers: int = 1, block_size: int = DEFAULT_BLOCK,
               method: str = "auto") -> dict:
    """Fold per-replica statistics of every block into accumulators.

    ``reducer`` maps a block to ``{name: array}`` (or ``{name: (y, x)}`` for
    ratio pairs) with the replica axis first.  Blocks are merged in index
    order, so the result does not depend on ``workers``.
    """
    accs: dict = {}
    for block in iter_blocks(params, plan, seed, n_runs, workers, block_size, method=method):
        for name, stat in reducer(block).items():
            if isinstance(stat, tuple):
                acc = accs.setdefault(name, PairAccumulator(stat[0].shape[1:]))
                acc.add_batch(*stat)
            else:
                acc = accs.setdefault(name, Accumulator(stat.shape[1:]))
                acc.add_batch(stat)
    return accs


def _validate_steps(steps) -> list[int]:
    steps = [int(s) for s in steps]
    if not steps:
        raise ValueError("empty step list")
    return steps


def _validate_ks(ks, d: int) -> np.ndarray:
    ks = np.asarray(ks, dtype=np.float64)
    if ks.size == 0:
        raise ValueError("empty momentum list")
    return ks.reshape(-1, d)


def estimate_two_point_ft(params: ModelParams, steps: Sequence[int], ks, n_runs: int,
                          seed: int, workers: int = 1,
                          block_size: int = DEFAULT_BLOCK) -> EstimateTable:
    """Fourier-transformed two-point function, symmetrized over +-k (real)."""
    steps = _validate_steps(steps)
    ks = _validate_ks(ks, params.d)
    plan = ReplicaPlan.build(steps, ks, params.d)
    accs = accumulate(params, plan, n_runs, seed, lambda b: {"tau": b.ft.real},
                      workers, block_size)
    acc = accs["tau"]
    table = EstimateTable("two_point", params.epsilon)
    for n in steps:
        j = plan.step_index(n)
        for a in range(ks.shape[0]):
            table.rows.append(Row(n, a, acc.estimate((j, a))))
    return table


def r_point_statistic(block: BlockResult, plan: ReplicaPlan, times, k_rows) -> np.ndarray:
    """Per-replica ``Re prod_i sum_{x in C_{t_i}} exp(i k_i . x)``.

    Factors are multiplied in a canonical (t, k) order so the statistic is
    bitwise invariant under permutations of the (t_i, k_i) pairs.
    """
    keys = sorted(zip((int(t) for t in times), (int(a) for a in k_rows)),
                  key=lambda p: (p[0], tuple(plan.ks[p[1]])))
    prod = None
    for t, a in keys:
        f = block.ft[:, plan.step_index(t), a]
        prod = f if prod is None else prod * f
    return prod.real


def _k_table(ks: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Distinct momentum rows and the row index of each input momentum."""
    rows: list[tuple] = []
    index = []
    for k in ks:
        key = tuple(float(c) for c in k)
        if key not in rows:
            rows.append(key)
        index.append(rows.index(key))
    return np.array(rows, dtype=np.float64), index


def estimate_r_point_ft(params: ModelParams, times: Sequence[int], ks, n_runs: int,
                        seed: int, workers: int = 1,
                        block_size: int = DEFAULT_BLOCK) -> Estimate:
    """Fourier-transformed r-point function at step vector ``times``."""
    times = [int(t) for t in times]
    ks = np.asarray(ks, dtype=np.float64).reshape(-1, params.d) if len(ks) else np.zeros((0, params.d))
    if len(times) < 1 or len(times) != ks.shape[0]:
        raise ValueError("need len(times) == len(ks) >= 1")
    uniq, index = _k_table(ks)
    plan = ReplicaPlan.build(times, uniq, params.d)
    accs = accumulate(params, plan, n_runs, seed,
                      lambda b: {"r": r_point_statistic(b, plan, times, index)},
                      workers, block_size)
    return accs["r"].estimate((), channel="real")


def estimate_survival(params: ModelParams, steps: Sequence[int], n_runs: int, seed: int,
                      workers: int = 1, block_size: int = DEFAULT_BLOCK) -> EstimateTable:
    steps = _validate_steps(steps)
    plan = ReplicaPlan.build(steps, [], params.d)
    accs = accumulate(params, plan, n_runs, seed,
                      lambda b: {"theta": (b.mass > 0).astype(np.float64)},
                      workers, block_size)
    table = EstimateTable("survival", params.epsilon)
    for n in steps:
        table.rows.append(Row(n, 0, accs["theta"].estimate(plan.step_index(n))))
    return table


def estimate_msd(params: ModelParams, steps: Sequence[int], n_runs: int, seed: int,
                 workers: int = 1, block_size: int = DEFAULT_BLOCK) -> EstimateTable:
    """Mean-squared displacement ``sum_x |x|^2 tau_t(x) / tau_t(0)`` (ratio estimator)."""
    steps = _validate_steps(steps)
    plan = ReplicaPlan.build(steps, [], params.d)
    accs = accumulate(params, plan, n_runs, seed,
                      lambda b: {"msd": (b.sqdisp, b.mass)}, workers, block_size)
    table = EstimateTable("msd", params.epsilon)
    for n in steps:
        table.rows.append(Row(n, 0, accs["msd"].ratio(plan.step_index(n))))
    return table


@dataclass
class FittedConstants:
    A: float
    v: float
    V: float
    se_A: float
    se_v: float
    se_V: float
    window: tuple[int, int]
    steps: list[int]
    V_defined: bool = True
    r2_msd: float = math.nan
    residuals: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "A": self.A, "v": self.v, "V": self.V,
            "se_A": self.se_A, "se_v": self.se_v, "se_V": self.se_V,
            "window": list(self.window), "V_defined": self.V_defined,
            "r2_msd": self.r2_msd,
        }


def plateau_steps(steps: Sequence[int], n_max: int | None = None,
                  window: tuple[float, float] = (0.5, 1.0)) -> list[int]:
    n_max = max(steps) if n_max is None else n_max
    lo, hi = window[0] * n_max, window[1] * n_max
    return [n for n in sorted(steps) if lo <= n <= hi]


def linear_r2(x: np.ndarray, y: np.ndarray) -> float:
    """Coefficient of determination of the ordinary least-squares line."""
    if len(x) < 3:
        return math.nan
    coef = np.polyfit(x, y, 1)
    res = y - np.polyval(coef, x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - float(np.sum(res**2)) / ss_tot if ss_tot > 0 else math.nan


def fit_constants(two_point: EstimateTable, msd: EstimateTable, three_point: EstimateTable,
                  params: ModelParams, window: tuple[float, float] = (0.5, 1.0),
                  n_max: int | None = None) -> FittedConstants:
    """Plateau fits of A (mass level), v (diffusion) and V (vertex factor).

    Standard errors treat the window points as fully correlated, which bounds
    the error of a window average from above.
    """
    common = set(two_point.steps()) & set(msd.steps()) & set(three_point.steps())
    steps = plateau_steps(sorted(common), n_max, window)
    steps = [n for n in steps if n > 0]
    if not steps:
        raise ValueError("plateau window contains no steps")
    eps = params.epsilon
    t = np.array(steps, dtype=np.float64) * eps
    tau = np.array([two_point.get(n).value for n in steps])
    se_tau = np.array([two_point.get(n).stderr for n in steps])
    m = np.array([msd.get(n).value for n in steps])
    se_m = np.array([msd.get(n).stderr for n in steps])
    tau3 = np.array([three_point.get(n).value for n in steps])
    se_tau3 = np.array([three_point.get(n).stderr for n in steps])

    A = float(np.mean(tau))
    se_A = float(np.mean(se_tau))
    x = params.kernel.sigma2 * t
    finite = np.isfinite(m)
    if finite.any():
        xf, mf = x[finite], m[finite]
        v = float(np.sum(xf * mf) / np.sum(xf * xf))
        se_v = float(np.sum(xf * se_m[finite]) / np.sum(xf * xf))
        r2 = linear_r2(xf, mf)
    else:
        v, se_v, r2 = math.nan, math.nan, math.nan

    residuals = {"A": (tau - A).tolist(), "v": (m - v * x).tolist()}
    if A <= 0.0 or A <= 3.0 * se_A:
        return FittedConstants(A, v, math.nan, se_A, se_v, math.nan,
                               (steps[0], steps[-1]), steps, False, r2, residuals)
    ratio = tau3 / (A**3 * t)
    V = float(np.mean(ratio))
    rel = np.where(tau3 > 0, se_tau3 / np.where(tau3 > 0, tau3, 1.0), 0.0)
    se_V = float(np.mean(ratio * (rel + 3.0 * se_A / A)))
    residuals["V"] = (ratio - V).tolist()
    return FittedConstants(A, v, V, se_A, se_v, se_V, (steps[0], steps[-1]), steps,
                           True, r2, residuals)


def map_momenta(kappas, v_hat: float, sigma2: float, T: float) -> np.ndarray:
    """Lattice momenta ``kappa / sqrt(v * sigma^2 * T)``; refuses to clamp."""
    kappas = np.asarray(kappas, dtype=np.float64)
    scale = math.sqrt(v_hat * sigma2 * T)
    ks = kappas / scale
    if np.any(np.abs(ks) > np.pi):
        raise MomentumClampError(
            f"rescaled momentum {ks.max():.4g} exceeds pi; enlarge T or shrink kappa")
    return ks
