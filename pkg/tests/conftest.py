import numpy as np
import pytest

from locop import corpus


@pytest.fixture(scope="session")
def t131_64():
    return corpus.toeplitz_matrix([1, 3, 1], 64)


@pytest.fixture(scope="session")
def gaussian_op():
    # calibrated once per session: validation + amalgam calibration is the
    # expensive part, the operator itself is immutable
    return corpus.gaussian_kernel_op(0.1, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def pytest_terminal_summary(terminalreporter):
    """Echo one line per acceptance criterion after the test run."""
    lines = []
    for reports in terminalreporter.stats.values():
        for report in reports:
            if getattr(report, "when", None) != "call":
                continue
            for key, value in getattr(report, "user_properties", []):
                if key == "acceptance":
                    lines.append(value)
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
