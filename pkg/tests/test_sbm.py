from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from cplab.sbm import MomentQuery, Quadrature, m_hat, m_hat_closed_form_l2


def oracle(times, ks, d):
    """Recursion evaluated with adaptive scipy quadrature at every level."""
    ks = [np.asarray(k, dtype=float) for k in ks]
    l = len(times)
    if l == 1:
        return math.exp(-(ks[0] @ ks[0]) * times[0] / (2 * d))
    ksum = sum(ks)
    rate = ksum @ ksum / (2 * d)

    def integrand(u):
        acc = 0.0
        rest = range(1, l)
        for size in range(1, l):
            for I in itertools.combinations(rest, size):
                J = [i for i in range(l) if i not in I]
                acc += (oracle([times[i] - u for i in I], [ks[i] for i in I], d)
                        * oracle([times[i] - u for i in J], [ks[i] for i in J], d))
        return math.exp(-rate * u) * acc

    return quad(integrand, 0.0, min(times), epsabs=1e-12, epsrel=1e-10)[0]


def q(times, ks=None, d=5, **kw):
    ks = ks if ks is not None else [[0.0] * d for _ in times]
    return MomentQuery(tuple(times), tuple(map(tuple, ks)), d, Quadrature(**kw))


def test_first_moment() -> None:
    assert m_hat(q([1.0], [[2.0, 0.0, 2.0, 0.0]], d=4)).value == pytest.approx(math.exp(-1))
    assert m_hat(q([0.0], [[1.0] * 4], d=4)).value == 1.0
    assert m_hat(q([3.0])).value == 1.0


def test_zero_momentum_values() -> None:
    assert m_hat(q([1.0, 2.0])).value == pytest.approx(1.0, abs=1e-12)
    assert m_hat(q([1.0, 1.0, 1.0])).value == pytest.approx(1.5, abs=1e-8)
    # f_l(s) = M^(l)_{(s,..,s)}(0): f_4' = 3 f_1 f_3 + 3 f_2^2 + f_3 f_1 = 9 s^2, so f_4(1) = 3
    assert m_hat(q([1.0] * 4)).value == pytest.approx(3.0, abs=1e-6)


def test_l2_closed_form() -> None:
    rng = np.random.default_rng(0)
    k1 = rng.normal(size=5)
    got = m_hat(q([1.0, 2.0], [k1, -k1])).value
    b = k1 @ k1 / 10
    want = math.exp(-b * 3.0) * (math.exp(2 * b * 1.0) - 1) / (2 * b)
    assert got == pytest.approx(want, rel=1e-8)
    assert m_hat_closed_form_l2(1.0, 2.0, k1, -k1, 5) == pytest.approx(want, rel=1e-13)
    assert m_hat_closed_form_l2(0.7, 1.3, [0.0] * 5, [0.0] * 5, 5) == 0.7
    for _ in range(10):
        k = rng.normal(size=(2, 5))
        assert m_hat(q([1.0, 2.0], k)).value == pytest.approx(
            m_hat_closed_form_l2(1.0, 2.0, k[0], k[1], 5), rel=1e-6)


def test_l3_against_nested_quad() -> None:
    rng = np.random.default_rng(2)
    for _ in range(3):
        t = rng.uniform(0.3, 2.0, size=3)
        k = rng.uniform(-1.0, 1.0, size=(3, 4))
        assert m_hat(q(t, k, d=4)).value == pytest.approx(oracle(list(t), list(k), 4), rel=1e-6)


times = st.lists(st.floats(0.1, 3.0), min_size=2, max_size=3)


@given(times, st.data())
def test_permutation_positivity_domination(ts, data) -> None:
    d = 4
    ks = data.draw(st.lists(st.lists(st.floats(-2, 2), min_size=d, max_size=d),
                            min_size=len(ts), max_size=len(ts)))
    perm = data.draw(st.permutations(range(len(ts))))
    a = m_hat(q(ts, ks, d=d)).value
    b = m_hat(q([ts[i] for i in perm], [ks[i] for i in perm], d=d)).value
    assert a == pytest.approx(b, rel=1e-6)
    assert 0.0 < a <= m_hat(q(ts, d=d)).value * (1 + 1e-9)


@given(times, st.floats(0.2, 4.0))
def test_homogeneity(ts, c) -> None:
    l = len(ts)
    base = m_hat(q(ts)).value
    assert m_hat(q([c * t for t in ts])).value == pytest.approx(c ** (l - 1) * base, rel=1e-6)


def test_zero_time_and_validation() -> None:
    r = m_hat(q([0.0, 1.0]))
    assert r.value == 0.0 and "zero-time" in r.flags
    with pytest.raises(ValueError):
        q([1.0] * 5)
    with pytest.raises(ValueError):
        MomentQuery((1.0, 1.0), ((0.0, 0.0), (0.0,)), 2)
    with pytest.raises(ValueError):
        q([-1.0, 1.0])


def test_nonconvergence_is_flagged() -> None:
    r = m_hat(q([1.0, 1.0, 1.0], [[1.5, 0, 0, 0, 0]] * 3, initial_panels=1, max_panels=2, tol=1e-15))
    assert not r.converged and "nonconverged" in r.flags and r.last_two is not None
