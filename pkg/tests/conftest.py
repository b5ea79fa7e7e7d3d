import numpy as np
import pytest

from radium.core import RngStream


@pytest.fixture
def rng():
    return RngStream(12345, 7)


def gaussian_target(x):
    """Standard normal log-density and gradient for a single point."""
    x = np.asarray(x, dtype=float)
    return -0.5 * float(x @ x), -x


# criterion number -> (passed, detail), filled in by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
