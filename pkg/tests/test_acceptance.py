"""Runs each acceptance criterion at its stated tolerance and prints one
PASS/FAIL line per criterion."""

import pytest

from stablelab.acceptance import CRITERIA, run_criterion


@pytest.mark.parametrize("number", [c[0] for c in CRITERIA], ids=[f"criterion_{c[0]}" for c in CRITERIA])
def test_criterion(number, capsys):
    r = run_criterion(number)
    with capsys.disabled():
        print("\n" + r.line())
    assert r.passed, r.details
