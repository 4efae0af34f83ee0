from __future__ import annotations

import numpy as np
import pytest

from jumpresponse import Cosine, Field, StationaryChain
from jumpresponse.models import two_state

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def two():
    """Two-state chain a = 2, b = 1 with g = 1 on the edge (0, 1)."""
    r = two_state(2.0, 1.0)
    g = Field.static(np.array([[0.0, 1.0], [0.0, 0.0]]))
    return r, StationaryChain(r), g


@pytest.fixture
def two_cos():
    """Same chain with g = cos(s) on the edge (0, 1)."""
    r = two_state(2.0, 1.0)
    g = Field.decoupled(Cosine(1.0), np.array([[0.0, 1.0], [0.0, 0.0]]))
    return r, StationaryChain(r), g
