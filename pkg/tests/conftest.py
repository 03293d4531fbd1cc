import numpy as np
import pytest

from nrse import corpus
from nrse.signal_core import SampledSignal

FS = 16000


@pytest.fixture(scope="session")
def fs():
    return FS


@pytest.fixture(scope="session")
def utterance():
    """One 2 s synthetic utterance, shared across tests."""
    return corpus.synth_utterance(0, FS, 2.0)


@pytest.fixture(scope="session")
def utterances():
    """Five short utterances for ordering/ranking checks."""
    return [corpus.synth_utterance(i, FS, 2.0) for i in range(5)]


@pytest.fixture(scope="session")
def rir_long():
    """The more reverberant of the two bundled room responses."""
    return corpus.synth_rir(1.1, FS, 0, -2.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(0xC0FFEE)


def make_tone(freq_hz: float, n: int, fs: int = FS, amp: float = 0.5) -> SampledSignal:
    t = np.arange(n) / fs
    return SampledSignal(amp * np.sin(2 * np.pi * freq_hz * t), fs)


# ---------------------------------------------------------------------------
# acceptance verdicts: repeat one PASS/FAIL line per criterion at the end of
# the run, so the outcome is visible without -s
# ---------------------------------------------------------------------------

_acceptance_outcomes: dict = {}


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py::test_criterion" in report.nodeid:
        _acceptance_outcomes[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(_acceptance_outcomes):
        name = nodeid.split("::")[-1]
        state = "PASS" if _acceptance_outcomes[nodeid] == "passed" else "FAIL"
        terminalreporter.write_line(f"{name}: {state}")
