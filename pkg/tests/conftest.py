import numpy as np
import pytest

from fixedlag.models import Ar1Params, SvParams, simulate

SMOOTHING_PARAMS = Ar1Params(0.8, 0.5, 2.0)
AR1_TRUTH = Ar1Params(0.98, 0.2, 1.0)
SV_TRUTH = SvParams(0.63, 0.975, 0.16)


@pytest.fixture
def ar1_data():
    """Short AR(1) record from the generating parameters."""
    return simulate(AR1_TRUTH, 30, seed=11)


@pytest.fixture
def sv_data():
    return simulate(SV_TRUTH, 30, seed=12)


def gauss_pdf(z, mean, sd):
    return np.exp(-0.5 * ((z - mean) / sd) ** 2) / (sd * np.sqrt(2 * np.pi))


# --- acceptance report -------------------------------------------------------

ACCEPTANCE_LINES: dict[int, str] = {}


def report(criterion: int, passed: bool, detail: str) -> bool:
    """Record (and print) the one-line outcome of an acceptance criterion."""
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} -- {detail}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
