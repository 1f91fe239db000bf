import numpy as np
import pytest

from fdcal.harness.config import TransceiverConfig
from fdcal.waveform import ComplexBaseband, OfdmParams

_ACCEPTANCE_LINES = []


def record_acceptance(criterion, passed, detail=""):
    """Collect one line for the acceptance summary printed at the end of the run."""
    status = "PASS" if passed else "FAIL"
    _ACCEPTANCE_LINES.append(f"[{status}] criterion {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in _ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def params():
    return OfdmParams()


@pytest.fixture
def cfg():
    return TransceiverConfig()


def cgauss(rng, n, power=1.0):
    return np.sqrt(power / 2.0) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def cb(samples, rate=1.0):
    return ComplexBaseband(np.asarray(samples, dtype=complex), rate)
