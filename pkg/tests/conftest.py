"""Shared fixtures and random-instance helpers."""

import numpy as np
import pytest

from renyi_uq.dist import FiniteDiscrete, QoI


def random_discrete(rng, n=None, low=4, high=10):
    """Finite-discrete law on ``0..n-1`` with Dirichlet(1) probabilities."""
    n = int(rng.integers(low, high + 1)) if n is None else n
    return FiniteDiscrete(np.arange(n, dtype=float), rng.dirichlet(np.ones(n)))


def table_qoi(values):
    """QoI on integer support points given by a lookup table."""
    vals = np.asarray(values, dtype=float)
    return QoI.function(lambda x: vals[int(x)], label="table")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
