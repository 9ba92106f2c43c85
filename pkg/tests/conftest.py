import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def separated_features(rng, n, dim, kind, min_gap=1e-3, max_tries=200):
    """Random normal features whose pairwise distances (under ``kind``,
    targets = the set itself) all exceed ``min_gap``; None if not found."""
    from cxloss.cx import pairwise_distances

    for _ in range(max_tries):
        x = rng.normal(size=(n, dim))
        d = pairwise_distances(x, x, kind)
        off = d[~np.eye(n, dtype=bool)]
        if off.size == 0 or off.min() >= min_gap:
            return x
    return None


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
