from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cplab.model import (CapacityError, InvalidParameters, ModelParams, RangeScaling, bond_prob,
                         one_step_mean, uniform_kernel)


def brute_sigma2(d: int, L: int) -> float:
    pts = [x for x in itertools.product(range(-L, L + 1), repeat=d) if any(x)]
    return math.fsum(sum(c * c for c in x) for x in pts) / len(pts)


def test_small_kernels() -> None:
    k = uniform_kernel(1, 1)
    assert k.size == 2 and k.weight([1]) == k.weight([-1]) == 0.5
    assert k.sigma2 == 1.0 and k.sup_norm == 0.5
    assert uniform_kernel(2, 1).sigma2 == 1.5
    assert uniform_kernel(1, 2).sigma2 == 2.5


@given(st.integers(1, 3), st.integers(1, 4))
def test_kernel_properties(d: int, L: int) -> None:
    k = uniform_kernel(d, L)
    assert abs(math.fsum(k.weights) - 1.0) <= 1e-12
    assert k.weight([0] * d) == 0.0
    assert k.sigma2 == brute_sigma2(d, L)
    assert k.sup_norm == 1.0 / ((2 * L + 1) ** d - 1)
    rng = np.random.default_rng(d * 10 + L)
    for x in k.offsets[rng.integers(0, k.size, 5)]:
        assert k.weight(-x) == k.weight(x) == k.weight(x[::-1]) == k.weight(np.abs(x))
    assert uniform_kernel(d, L) == k


def test_support_cap() -> None:
    with pytest.raises(CapacityError):
        uniform_kernel(9, 4)


def test_bond_prob_examples() -> None:
    assert bond_prob(ModelParams.uniform(1, 1, 0.1, 1.0), [0]) == pytest.approx(0.9, abs=1e-15)
    p = ModelParams.uniform(1, 1, 0.1, 1.2)
    assert bond_prob(p, [1]) == pytest.approx(0.06, rel=1e-14)
    assert bond_prob(p, [2]) == 0.0


@given(st.integers(1, 3), st.integers(1, 3), st.sampled_from([0.1, 0.5, 1.0]),
       st.floats(0.0, 2.0))
def test_bond_probs_sum(d: int, L: int, eps: float, lam: float) -> None:
    p = ModelParams.uniform(d, L, eps, lam)
    probs = [bond_prob(p, x) for x in p.kernel.offsets]
    assert all(0.0 <= q <= 1.0 for q in probs)
    assert abs(math.fsum(probs) - lam * eps) <= 1e-12


def test_one_step_mean() -> None:
    for eps in (0.1, 0.5, 1.0):
        assert one_step_mean(ModelParams.uniform(2, 1, eps, 1.0)) == 1.0
    assert one_step_mean(ModelParams.uniform(2, 1, 0.5, 1.2)) == pytest.approx(1.1)
    assert one_step_mean(ModelParams.uniform(2, 1, 0.25, 0.0)) == 0.75


def test_validity_checks() -> None:
    with pytest.raises(InvalidParameters):
        ModelParams.uniform(1, 1, 0.0, 1.0)
    with pytest.raises(InvalidParameters):
        ModelParams.uniform(1, 1, 0.5, -1.0)
    ModelParams.uniform(1, 1, 1.0, 2.0)  # bond probability exactly 1
    with pytest.raises(InvalidParameters):
        ModelParams.uniform(1, 1, 1.0, 2.0000001)


def test_range_scaling() -> None:
    p = ModelParams.range_scaled(3, 2, 0.5, 16.0, 0.5, 1.0)
    assert p.L == math.ceil(2 * 16**0.5) == 8
    assert p.alpha == pytest.approx(0.5 * 3 - 0.5)
    sc = RangeScaling(2, 0.5, 16.0)
    assert sc.beta_T(3) == pytest.approx(2.0**-3 * 16 ** (-1.5))
    with pytest.raises(InvalidParameters):
        ModelParams.range_scaled(3, 2, 0.1, 16.0, 0.5, 1.0)  # alpha = 0.3 - 0.5 < 0
    assert ModelParams.uniform(2, 3, 1.0, 1.0).beta == 3.0**-2
