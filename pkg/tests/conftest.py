import sys

import numpy as np
import pytest

from hankelreg.strings import BINARY, Alphabet


@pytest.fixture
def ab():
    return Alphabet(("a", "b"))


@pytest.fixture
def binary():
    return BINARY


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def explicit_hankel(f, rows, cols, max_total=None):
    """Loop-built Hankel matrix: the independent oracle for block construction."""
    m = np.zeros((len(rows), len(cols)))
    for i, u in enumerate(rows):
        for j, v in enumerate(cols):
            if max_total is None or len(u) + len(v) <= max_total:
                m[i, j] = f(tuple(u) + tuple(v))
    return m


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line[1])
