"""Runs the ten acceptance criteria at their stated tolerances.

Each test prints the criterion's one-line pass/fail summary. Failures are
reported as failures; see the project notes for the analysis of the ones
that do not pass.
"""
import pytest

from oedctl.acceptance import CRITERIA, QUICK


@pytest.mark.parametrize("number", [
    pytest.param(n, marks=() if n in QUICK else pytest.mark.slow) for n in sorted(CRITERIA)])
def test_criterion(number, capsys):
    res = CRITERIA[number]()
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.line()
