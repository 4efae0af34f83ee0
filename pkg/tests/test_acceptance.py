"""Acceptance suite: one PASS/FAIL line per criterion at its stated tolerance."""
from __future__ import annotations

import pytest

from jumpresponse.acceptance import CRITERIA

from .conftest import ACCEPTANCE_LINES


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{i + 1}" for i in range(len(CRITERIA))])
def test_criterion(criterion, capsys):
    res = criterion()
    line = res.line()
    ACCEPTANCE_LINES.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert res.passed, res.detail
    assert res.within_budget, f"runtime {res.runtime:.1f}s exceeds budget {res.budget}s"
