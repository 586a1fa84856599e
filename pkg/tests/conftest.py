import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from shelfrl.dynamics import CapacityConfig, ProductCatalog  # noqa: E402


def make_catalog(p=3, a=0.05, v=1.0, c=1.0, tau=0.1, **kw):
    full = lambda val: np.broadcast_to(np.asarray(val, dtype=float), (p,)).copy()  # noqa: E731
    return ProductCatalog(full(a), full(v), full(c), full(tau), **kw)


@pytest.fixture
def catalog3():
    return make_catalog(3, a=[0.0, 0.05, 0.1], v=[1.0, 2.0, 0.5], c=[0.5, 1.0, 1.5])


@pytest.fixture
def loose_capacity():
    return CapacityConfig(v_max=100.0, c_max=100.0, alpha=0.5, gamma=0.9)


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    def order(line):
        tag = line.split()[1].rstrip(":")
        return int(tag) if tag.isdigit() else 99

    for line in sorted(ACCEPTANCE_LINES, key=order):
        terminalreporter.write_line(line)
