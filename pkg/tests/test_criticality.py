from __future__ import annotations

import math

import numpy as np
import pytest

from cplab.criticality import (INCONCLUSIVE, SUB, SUPER, Decision, InvalidBracket,
                               locate_lambda_c, probe, refined_root, window_slope)
from cplab.model import ModelParams


def test_window_slope_exact_exponential() -> None:
    steps = np.arange(10, 21)
    masses = 3.0 * np.exp(0.02 * steps)
    blocks = np.tile(masses, (8, 1)) * 50.0
    slope, se = window_slope(steps, blocks, np.full(8, 50.0))
    assert slope == pytest.approx(0.02, rel=1e-12) and se == pytest.approx(0.0, abs=1e-12)
    dead = np.zeros((8, steps.size))
    assert window_slope(steps, dead, np.full(8, 50.0))[0] == -math.inf


def test_refined_root_linear() -> None:
    trace = [Decision(l, 0.5 * (l - 1.01), 0.5 * (l - 1.01) - 3e-3, 0.5 * (l - 1.01) + 3e-3, 10, SUB)
             for l in (0.98, 1.0, 1.02, 1.04)]
    assert refined_root(trace, 1.0, 1.02) == pytest.approx(1.01, abs=1e-12)
    assert refined_root(trace[:1], 1.0, 1.02) == pytest.approx(1.01)  # midpoint fallback


def test_probe_extremes() -> None:
    tpl = ModelParams.uniform(2, 1, 0.5, 0.0)
    assert probe(tpl, 0.0, 20, 500, seed=1).verdict == SUB
    # every bond occupied: the cluster is {-n, -n+2, ..., n} and grows linearly
    dec = probe(ModelParams.uniform(1, 1, 1.0, 2.0), 2.0, 20, 400, seed=2)
    assert dec.verdict == SUPER and dec.ci_low > 0


def test_locate_invariants_and_determinism() -> None:
    tpl = ModelParams.uniform(2, 1, 1.0, 1.0)
    kw = dict(n_max=30, n_runs=2000, tol=0.05, seed=3, n_runs_cap=8000)
    est = locate_lambda_c(tpl, (0.5, 3.0), **kw)
    assert est.lambda_low < est.lambda_high
    assert est.converged == (est.width <= 0.05)
    assert est.lambda_low <= est.lambda_hat <= est.lambda_high
    lo, hi = 0.5, 3.0
    for dec in est.trace[2:]:
        if dec.verdict == INCONCLUSIVE:
            break
        assert dec.lam == pytest.approx(0.5 * (lo + hi))
        assert (dec.ci_high < 0) if dec.verdict == SUB else (dec.ci_low > 0)
        lo, hi = (dec.lam, hi) if dec.verdict == SUB else (lo, dec.lam)
    assert (lo, hi) == (est.lambda_low, est.lambda_high)
    again = locate_lambda_c(tpl, (0.5, 3.0), **kw)
    assert again.trace == est.trace


def test_invalid_brackets() -> None:
    tpl = ModelParams.uniform(2, 1, 1.0, 1.0)
    with pytest.raises(InvalidBracket):
        locate_lambda_c(tpl, (2.0, 1.0), 20, 500, 0.1, seed=1)
    with pytest.raises(InvalidBracket):
        locate_lambda_c(tpl, (0.1, 0.2), 20, 500, 0.1, seed=1)
