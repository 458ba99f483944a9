from __future__ import annotations

import math

import numpy as np
import pytest

from cplab.engine import ReplicaPlan, run_block
from cplab.estimators import (MomentumClampError, estimate_msd, estimate_r_point_ft,
                              estimate_survival, estimate_two_point_ft, fit_constants,
                              map_momenta, r_point_statistic)
from cplab.model import ModelParams
from cplab.stats import Estimate, EstimateTable, Row

KS = [[0.0, 0.0], [0.7, -0.3], [-2.0, 1.0]]


def test_two_point_at_origin_time() -> None:
    t = estimate_two_point_ft(ModelParams.uniform(2, 1, 0.5, 1.0), [0, 3], KS, 500, seed=1)
    for a in range(len(KS)):
        e = t.get(0, a)
        assert e.value == 1.0 and e.stderr == 0.0
        assert t.get(3, a).mean.imag == 0.0


def test_lambda_zero_laws() -> None:
    p = ModelParams.uniform(2, 1, 0.5, 0.0)
    assert estimate_two_point_ft(p, [2], [[0, 0]], 50_000, seed=2).get(2).within(0.25, 3)
    assert estimate_r_point_ft(p, [3, 3], [[0, 0], [0, 0]], 50_000, seed=3).within(0.125, 3)
    surv = estimate_survival(p, [0, 3], 50_000, seed=4)
    assert surv.get(0).value == 1.0 and surv.get(3).within(0.125, 3)
    msd = estimate_msd(p, [0, 1, 5], 2000, seed=5)
    assert all(msd.get(n).value == 0.0 for n in (0, 1))


def test_one_step_examples() -> None:
    p = ModelParams.uniform(1, 1, 1.0, 1.0)
    assert estimate_two_point_ft(p, [1], [[0.0]], 50_000, seed=6).get(1).within(1.0, 3)
    msd = estimate_msd(p, [0, 1], 50_000, seed=7)
    assert msd.get(0).value == 0.0
    assert msd.get(1).within(1.0, 3)


def test_pathwise_identities() -> None:
    p = ModelParams.uniform(2, 1, 0.5, 1.1)
    plan = ReplicaPlan.build([2, 6], [KS[1], [-0.7, 0.3]], 2)
    blk = run_block(p, plan, 8, 0, 400)
    # k and -k give conjugate sums
    np.testing.assert_array_equal(blk.ft[:, :, 0], np.conj(blk.ft[:, :, 1]))
    two = r_point_statistic(blk, plan, [6], [0])
    np.testing.assert_array_equal(two, blk.ft[:, 1, 0].real)
    np.testing.assert_array_equal(r_point_statistic(blk, plan, [2, 6], [0, 1]),
                                  r_point_statistic(blk, plan, [6, 2], [1, 0]))
    assert np.all((blk.mass > 0) <= blk.mass)


def test_r_point_r2_matches_two_point() -> None:
    p = ModelParams.uniform(2, 1, 0.5, 0.95)
    t = estimate_two_point_ft(p, [5], [KS[1]], 3000, seed=9)
    r = estimate_r_point_ft(p, [5], [KS[1]], 3000, seed=9)
    assert r.value == t.get(5).value and r.stderr == t.get(5).stderr


def _table(name: str, steps, values) -> EstimateTable:
    return EstimateTable(name, 1.0, [Row(n, 0, Estimate(complex(v, 0.0), 0.0, 100))
                                     for n, v in zip(steps, values)])


def test_fit_constants_synthetic() -> None:
    p = ModelParams.uniform(5, 2, 1.0, 1.0)
    steps = list(range(0, 41))
    t = np.array(steps, dtype=float)
    A0, v0, V0 = 2.0, 1.5, 1.0
    fit = fit_constants(_table("two_point", steps, np.full(t.size, A0)),
                        _table("msd", steps, v0 * p.kernel.sigma2 * t),
                        _table("three_point", steps, A0**3 * V0 * t), p)
    assert fit.window == (20, 40) and fit.V_defined
    assert abs(fit.A - A0) <= 1e-12 and abs(fit.v - v0) <= 1e-12 and abs(fit.V - V0) <= 1e-12
    assert fit.r2_msd == pytest.approx(1.0, abs=1e-12)


def test_fit_constants_degenerate_mass() -> None:
    p = ModelParams.uniform(2, 1, 0.5, 0.0)
    steps = list(range(11))
    z = np.zeros(11)
    fit = fit_constants(_table("two_point", steps, z), _table("msd", steps, z),
                        _table("three_point", steps, z), p)
    assert not fit.V_defined and math.isnan(fit.V)


def test_map_momenta() -> None:
    ks = map_momenta([[1.0, -2.0]], 1.0, 4.0, 25.0)
    np.testing.assert_allclose(ks, [[0.1, -0.2]])
    with pytest.raises(MomentumClampError):
        map_momenta([[40.0, 0.0]], 1.0, 1.0, 4.0)
