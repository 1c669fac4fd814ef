import numpy as np
import pytest

from spectral_lab import build_measure, edge_constants

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def quartic():
    """The a = b = 2, d = 1 measure used by most closed-form checks."""
    return build_measure(2, 2)


@pytest.fixture(scope="session")
def quartic_edge(quartic):
    return edge_constants(quartic, 2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        ok, detail = ACCEPTANCE_LINES[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
