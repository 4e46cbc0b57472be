"""The ten acceptance criteria, one test each.

Each result line is printed as it is produced and repeated in the terminal
summary (see conftest.py), so ``pytest tests/test_acceptance.py`` shows a
PASS/FAIL line per criterion even without ``-s``.
"""
import pytest

from calivis.checks import ALL_CHECKS

ACCEPTANCE_LINES = []


@pytest.mark.parametrize("check", ALL_CHECKS, ids=[f"{n:02d}-{fn.__name__[6:]}" for n, fn in enumerate(ALL_CHECKS, 1)])
def test_criterion(check):
    res = check()
    ACCEPTANCE_LINES.append(res.line())
    print(res.line())
    assert res.passed, res.line()
