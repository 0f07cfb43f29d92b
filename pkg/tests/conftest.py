import sys
from pathlib import Path

import numpy as np
import pytest

from fraccal.fracgrid import assemble_operator, build_lattice

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def op_two():
    """Omega = (-1, 1), W1 = (-3, -2), W2 = (2, 3), h = 0.05, s = 0.5."""
    return assemble_operator(build_lattice((-1, 1), [(-3, -2), (2, 3)], 0.05), 0.5)


@pytest.fixture(scope="session")
def op_one():
    """Omega = (-1, 1), W = (2, 3), h = 0.02, s = 0.5."""
    return assemble_operator(build_lattice((-1, 1), [(2, 3)], 0.02), 0.5)


@pytest.fixture(scope="session")
def op_std():
    """Default acceptance geometry: two windows, h = 0.02, s = 0.5."""
    return assemble_operator(build_lattice((-1, 1), [(-3, -2), (2, 3)], 0.02), 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
