"""Acceptance criteria 1-10; each prints one PASS/FAIL line (run with -s to see them live)."""

from __future__ import annotations

import pytest

from cplab import acceptance

SLOW = pytest.mark.slow


@pytest.mark.parametrize("number", [
    1, 2, 3, 4, 5, 6,
    pytest.param(7, marks=SLOW), pytest.param(8, marks=SLOW),
    9, 10,
])
def test_criterion(number: int, capsys) -> None:
    check = acceptance.CRITERIA[number]()
    with capsys.disabled():
        print("\n" + check.line())
    assert check.passed, check.line()
