"""Bisection for the critical infection rate of the discretized process.

At a probe rate the expected mass ``tau_t(0)`` is estimated over the window
``[n_max/2, n_max]`` and the least-squares slope of its logarithm decides the
side: a confidence interval below zero means subcritical, above zero
supercritical.  The interval comes from a delete-one-block jackknife over the
static replica blocks.  Every probe reuses the same master seed, so probes at
different rates see coupled bond variates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .engine import ReplicaPlan, iter_blocks
from .estimators import plateau_steps
from .model import ModelParams

log = logging.getLogger(__name__)

SUB, SUPER, INCONCLUSIVE = "subcritical", "supercritical", "inconclusive"


class InvalidBracket(ValueError):
    pass


@dataclass(frozen=True)
class Decision:
    lam: float
    slope: float
    ci_low: float
    ci_high: float
    n_runs: int
    verdict: str
    note: str = ""


@dataclass
class CriticalEstimate:
    lambda_low: float
    lambda_high: float
    trace: list[Decision]
    settings: dict
    converged: bool
    flags: list[str] = field(default_factory=list)

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lambda_low + self.lambda_high)

    @property
    def width(self) -> float:
        return self.lambda_high - self.lambda_low

    @property
    def lambda_hat(self) -> float:
        """Root of the slope-versus-rate line through nearby probes.

        The mass slope is close to linear in the rate near criticality, so a
        weighted fit over the probes within a few bracket widths locates the
        flat-mass point more sharply than the midpoint.  Falls back to the
        midpoint when the fit is degenerate; always clamped to the bracket.
        """
        return refined_root(self.trace, self.lambda_low, self.lambda_high,
                            self.settings.get("z", 3.0))


def _slope(steps: np.ndarray, masses: np.ndarray) -> float:
    x = steps - steps.mean()
    return float(np.sum(x * np.log(masses)) / np.sum(x * x))


def window_slope(steps, block_sums: np.ndarray, block_counts: np.ndarray):
    """Slope of log mean mass and its delete-one-block jackknife error.

    ``block_sums[b, j]`` is the summed mass of block ``b`` at ``steps[j]``.
    Returns ``(slope, stderr)``; ``slope`` is ``-inf`` once the mass is
    identically zero on (almost) the whole window.
    """
    steps = np.asarray(steps, dtype=np.float64)
    total = block_sums.sum(axis=0)
    n = block_counts.sum()
    loo = (total[None, :] - block_sums) / (n - block_counts)[:, None]
    ok = (total > 0) & np.all(loo > 0, axis=0)
    if ok.sum() < 2:
        return -math.inf, 0.0
    s = steps[ok]
    full = _slope(s, total[ok] / n)
    g = block_sums.shape[0]
    if g < 2:
        return full, math.inf
    jack = np.array([_slope(s, loo[b, ok]) for b in range(g)])
    se = math.sqrt((g - 1) / g * float(np.sum((jack - jack.mean()) ** 2)))
    return full, se


def refined_root(trace, lo: float, hi: float, z: float = 3.0, span: float = 4.0) -> float:
    mid = 0.5 * (lo + hi)
    reach = span * max(hi - lo, 1e-12)
    pts = [d for d in trace
           if math.isfinite(d.slope) and math.isfinite(d.ci_low) and abs(d.lam - mid) <= reach
           and d.ci_high > d.ci_low]
    if len(pts) < 2:
        return mid
    lam = np.array([d.lam for d in pts])
    y = np.array([d.slope for d in pts])
    w = 1.0 / ((np.array([d.ci_high - d.ci_low for d in pts]) / (2 * z)) ** 2)
    lm, ym = np.average(lam, weights=w), np.average(y, weights=w)
    sxx = np.sum(w * (lam - lm) ** 2)
    if sxx <= 0:
        return mid
    b = np.sum(w * (lam - lm) * (y - ym)) / sxx
    if not b > 0:
        return mid
    return float(min(max(lm - ym / b, lo), hi))


def probe(template: ModelParams, lam: float, n_max: int, n_runs: int, seed: int,
          n_runs_cap: int | None = None, z: float = 3.0, n_blocks: int = 40,
          window: tuple[float, float] = (0.5, 1.0), mass_cap: int | None = None,
          workers: int = 1) -> Decision:
    """Classify one rate, doubling the replica count while the CI straddles 0.

    A replica whose frontier exceeds ``mass_cap`` ends the probe as
    supercritical: near criticality such sizes are exponentially unlikely at
    this horizon, and far above it they arrive within a few dozen steps.
    """
    params = template.with_lambda(lam)
    steps = plateau_steps(list(range(n_max + 1)), n_max, window)
    steps = [s for s in steps if s > 0]
    if len(steps) < 2:
        raise ValueError("probe window needs at least two positive steps")
    plan = ReplicaPlan.build(steps, [], params.d)
    cap = n_runs if n_runs_cap is None else max(n_runs_cap, n_runs)
    mass_cap = 50 * n_max + 1000 if mass_cap is None else mass_cap
    block_size = max(1, math.ceil(n_runs / n_blocks))

    sums: list[np.ndarray] = []
    counts: list[int] = []
    done = 0
    target = n_runs
    while True:
        for blk in iter_blocks(params, plan, seed, target - done, workers, block_size,
                               first=done, mass_cap=mass_cap):
            if blk.capped:
                return Decision(lam, math.inf, math.inf, math.inf, done + blk.n, SUPER,
                                "frontier exceeded mass cap")
            sums.append(blk.mass.sum(axis=0))
            counts.append(blk.n)
        done = target
        slope, se = window_slope(steps, np.array(sums), np.array(counts, dtype=np.float64))
        if slope == -math.inf:
            return Decision(lam, slope, -math.inf, -math.inf, done, SUB, "mass extinct")
        lo, hi = slope - z * se, slope + z * se
        if hi < 0:
            return Decision(lam, slope, lo, hi, done, SUB)
        if lo > 0:
            return Decision(lam, slope, lo, hi, done, SUPER)
        if done >= cap:
            return Decision(lam, slope, lo, hi, done, INCONCLUSIVE, "replica cap reached")
        target = min(cap, 2 * done)


def locate_lambda_c(template: ModelParams, bracket: tuple[float, float], n_max: int,
                    n_runs: int, tol: float, seed: int, n_runs_cap: int | None = None,
                    z: float = 3.0, n_blocks: int = 40,
                    window: tuple[float, float] = (0.5, 1.0), mass_cap: int | None = None,
                    workers: int = 1, max_iter: int = 60) -> CriticalEstimate:
    lo, hi = map(float, bracket)
    if not lo < hi:
        raise InvalidBracket(f"bracket must satisfy low < high, got {bracket}")
    settings = {"n_max": n_max, "n_runs": n_runs, "n_runs_cap": n_runs_cap or n_runs,
                "tol": tol, "z": z, "seed": seed, "window": list(window)}
    kw = dict(n_runs_cap=n_runs_cap, z=z, n_blocks=n_blocks, window=window,
              mass_cap=mass_cap, workers=workers)

    trace = []
    d_lo = probe(template, lo, n_max, n_runs, seed, **kw)
    trace.append(d_lo)
    if d_lo.verdict != SUB:
        raise InvalidBracket(f"lower end {lo} is not decisively subcritical ({d_lo.verdict})")
    d_hi = probe(template, hi, n_max, n_runs, seed, **kw)
    trace.append(d_hi)
    if d_hi.verdict != SUPER:
        raise InvalidBracket(f"upper end {hi} is not decisively supercritical ({d_hi.verdict})")

    flags: list[str] = []
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        dec = probe(template, mid, n_max, n_runs, seed, **kw)
        trace.append(dec)
        log.info("lambda=%.6f slope=%.3e [%.3e, %.3e] -> %s", mid, dec.slope,
                 dec.ci_low, dec.ci_high, dec.verdict)
        if dec.verdict == SUB:
            lo = mid
        elif dec.verdict == SUPER:
            hi = mid
        else:
            flags.append("budget-exhausted")
            break
    converged = hi - lo <= tol
    if not converged and not flags:
        flags.append("max-iterations")
    return CriticalEstimate(lo, hi, trace, settings, converged, flags)
